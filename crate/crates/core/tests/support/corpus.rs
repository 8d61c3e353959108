#![allow(dead_code)]

pub const CAFE: &str = include_str!("../../../gract/examples/cafe.gract");
pub const CAFE_NOCUP: &str = include_str!("../../../gract/examples/cafe-nocup.gract");
pub const PRIVACY: &str = include_str!("../../../gract/examples/privacy.gract");
