//! Character-level phone symbol table (32 symbols).

/// Symbol inventory; a symbol id is the index into this string.
pub const SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyz .,!?'";

pub const SYMBOL_COUNT: usize = 32;

pub fn char_to_id(c: char) -> Option<u32> {
    SYMBOLS.find(c).map(|i| i as u32)
}

pub fn id_to_char(id: u32) -> Option<char> {
    SYMBOLS.chars().nth(id as usize)
}

/// Map a text string to phone ids, rejecting characters outside the table.
pub fn text_to_phones(text: &str) -> crate::Result<Vec<u32>> {
    let lower = text.to_lowercase();
    lower
        .chars()
        .map(|c| char_to_id(c).ok_or_else(|| crate::Error::UnknownPhone(c.to_string())))
        .collect()
}
