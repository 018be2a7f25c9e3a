//! Model-agnostic token estimator.
//!
//! A token is a maximal run of word characters (`[A-Za-z0-9_]`, plus any
//! non-ASCII alphanumeric) or a maximal run of punctuation (any other
//! non-whitespace character). Whitespace separates tokens and is never
//! counted. `a->b` is three tokens, `x += 1;` is four.

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Space,
    Word,
    Punct,
}

fn classify(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_alphanumeric() || c == '_' {
        Class::Word
    } else {
        Class::Punct
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut prev = Class::Space;
    for c in text.chars() {
        let class = classify(c);
        if class != Class::Space && class != prev {
            count += 1;
        }
        prev = class;
    }
    count
}
