pub fn a() -> u32 {
    let x: u32 = "seven";
    x
}

pub fn b() -> bool {
    5u8
}
