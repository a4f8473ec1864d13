//! Random sentences over the shipped lexicon.

use proptest::prelude::*;

fn noun_phrase() -> impl Strategy<Value = Vec<&'static str>> {
    (
        any::<bool>(),
        prop::sample::select(vec!["bugs", "dog", "spy", "spies", "microphones", "lounge", "wing", "embassy", "telescope"]),
    )
        .prop_map(|(adj, n)| if adj { vec!["the", "new", n] } else { vec!["the", n] })
}

fn chunk() -> impl Strategy<Value = Vec<&'static str>> {
    let verb = prop::sample::select(vec!["moved", "found", "put", "saw", "slept", "were", "transferred", "quickly"]);
    let prep = prop::sample::select(vec!["into", "with", "to"]);
    prop_oneof![
        verb.clone().prop_map(|v| vec![v]),
        (prep, noun_phrase()).prop_map(|(p, np)| [vec![p], np].concat()),
        noun_phrase(),
        (verb, noun_phrase()).prop_map(|(v, np)| [vec![v], np].concat()),
    ]
}

pub fn noisy() -> impl Strategy<Value = Vec<String>> {
    (noun_phrase(), prop::collection::vec(chunk(), 1..4), any::<bool>()).prop_map(|(np, rest, tail)| {
        let mut w: Vec<&str> = np;
        for c in rest {
            w.extend(c);
        }
        if tail {
            w.extend(["were", "found"]);
        }
        w.into_iter().map(String::from).collect()
    })
}

fn np_of(nouns: &'static [&'static str]) -> impl Strategy<Value = Vec<&'static str>> {
    (any::<bool>(), prop::sample::select(nouns)).prop_map(|(adj, n)| if adj { vec!["the", "new", n] } else { vec!["the", n] })
}

const AGENTS: &[&str] = &["spies", "spy", "dog", "bugs"];
const THINGS: &[&str] = &["bugs", "microphones", "telescope"];
const PLACES: &[&str] = &["lounge", "wing", "embassy"];

fn goal() -> impl Strategy<Value = Vec<&'static str>> {
    (prop::sample::select(vec!["into", "to"]), np_of(PLACES)).prop_map(|(p, n)| [vec![p], n].concat())
}

fn with() -> impl Strategy<Value = Vec<&'static str>> {
    np_of(AGENTS).prop_map(|n| [vec!["with"], n].concat())
}

fn verb_phrase() -> impl Strategy<Value = Vec<&'static str>> {
    let thing = || np_of(THINGS);
    prop_oneof![
        Just(vec!["slept"]),
        Just(vec!["were", "found", "quickly"]),
        (np_of(AGENTS), prop::option::of(with())).prop_map(|(n, w)| [vec!["saw"], n, w.unwrap_or_default()].concat()),
        (thing(), prop::option::of(with()), goal()).prop_map(|(n, w, g)| [vec!["put"], n, w.unwrap_or_default(), g].concat()),
        (prop::sample::select(vec!["moved", "were moved"]), goal()).prop_map(|(v, g)| [v.split(' ').collect::<Vec<_>>(), g].concat()),
        (thing(), goal()).prop_map(|(n, g)| [vec!["transferred"], n, g].concat()),
        thing().prop_map(|n| [vec!["found"], n].concat()),
    ]
}

fn reduced_relative() -> impl Strategy<Value = Vec<&'static str>> {
    (Just("moved"), goal(), prop::option::of(with()))
        .prop_map(|(v, g, w)| [vec![v], g, w.unwrap_or_default()].concat())
}

/// Mostly well-formed sentences, many of them garden paths.
pub fn grammatical() -> impl Strategy<Value = Vec<String>> {
    let passive = prop_oneof![
        Just(vec!["were", "found", "quickly"]),
        goal().prop_map(|g| [vec!["were", "moved"], g].concat()),
    ];
    prop_oneof![
        (np_of(AGENTS), verb_phrase()).prop_map(|(np, vp)| [np, vp].concat()),
        (np_of(THINGS), reduced_relative(), passive).prop_map(|(np, rel, vp)| [np, rel, vp].concat()),
    ]
    .prop_map(|w| w.into_iter().map(String::from).collect())
}
