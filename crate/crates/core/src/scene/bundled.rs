const ROOM: &str = include_str!("../../scenes/room.scene.json");
const CORRIDOR: &str = include_str!("../../scenes/corridor.scene.json");
const YARD: &str = include_str!("../../scenes/yard.scene.json");
const FLATLAND: &str = include_str!("../../scenes/flatland.scene.json");
const DEPOT: &str = include_str!("../../scenes/depot.scene.json");

const BUNDLED: [(&str, &str); 5] = [
    ("room", ROOM),
    ("corridor", CORRIDOR),
    ("yard", YARD),
    ("flatland", FLATLAND),
    ("depot", DEPOT),
];

pub fn bundled_scene_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// JSON source of a bundled scene.
pub fn bundled_scene_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
