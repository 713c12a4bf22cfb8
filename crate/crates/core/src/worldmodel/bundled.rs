//! Worlds compiled into the binary.

use super::{parse_world, WorldError, WorldSpec};

const WORLDS: [(&str, &str); 4] = [
    ("kitchen", include_str!("../../worlds/kitchen.world")),
    ("laboratory", include_str!("../../worlds/laboratory.world")),
    (
        "small_office",
        include_str!("../../worlds/small_office.world"),
    ),
    (
        "large_office",
        include_str!("../../worlds/large_office.world"),
    ),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    WORLDS.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    WORLDS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_bundled(name: &str) -> Option<Result<WorldSpec, WorldError>> {
    bundled_source(name).map(parse_world)
}
