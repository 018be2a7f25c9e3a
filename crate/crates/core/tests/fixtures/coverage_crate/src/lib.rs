pub fn add(a: i32, b: i32) -> i32 {
    a + b
}

pub fn scale(v: i32, k: i32) -> i32 {
    v * k
}

pub fn unused_helper(v: i32) -> i32 {
    v - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adds() {
        assert_eq!(add(2, 3), 5);
    }

    #[test]
    fn scales() {
        assert_eq!(scale(4, 3), 12);
    }
}
