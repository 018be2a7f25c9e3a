pub struct Cell(*mut u8);

impl Cell {
    /// Caller keeps the pointer valid.
    pub unsafe fn raw(&self) -> *mut u8 {
        self.0
    }

    pub fn get(&self) -> u8 {
        // reads through the pointer
        unsafe { *self.0 }
    }
}

pub const EMPTY: usize = 0;
