use serde::{Deserialize, Serialize};

/// A single normalised token.
///
/// `is_numeric` is derived from `text` and never set independently.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token {
    text: String,
    is_numeric: bool,
}

impl Token {
    /// Builds a token from already-normalised text.
    ///
    /// Returns `None` for empty text or text containing whitespace.
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return None;
        }
        let is_numeric = is_numeral(&text);
        Some(Token { text, is_numeric })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_numeric(&self) -> bool {
        self.is_numeric
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// Optional sign, optional single decimal point, at least one ASCII digit.
pub fn is_numeral(text: &str) -> bool {
    let body = text
        .strip_prefix('+')
        .or_else(|| text.strip_prefix('-'))
        .unwrap_or(text);
    let mut digits = 0usize;
    let mut points = 0usize;
    for c in body.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => points += 1,
            _ => return false,
        }
    }
    digits > 0 && points <= 1
}

/// Lowercases `text` and splits it into word and numeral tokens.
///
/// Words are maximal runs of alphanumeric characters. A run of ASCII digits
/// absorbs a following `.digits` group and a leading `+`/`-` that is not
/// glued to a preceding word, so `-3.25` stays one token. Everything else
/// (whitespace, punctuation, symbols) separates tokens and is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_fraction =
            c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) && !prev_is_word(&chars, i);
        if !c.is_alphanumeric() && !starts_fraction {
            i += 1;
            continue;
        }

        let start = i;
        let mut text = String::new();
        if starts_fraction {
            text.push('.');
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                text.push(chars[i]);
                i += 1;
            }
        } else {
            while i < chars.len() && chars[i].is_alphanumeric() {
                text.push(chars[i]);
                i += 1;
            }
            let all_digits = text.chars().all(|d| d.is_ascii_digit());
            if all_digits
                && i + 1 < chars.len()
                && chars[i] == '.'
                && chars[i + 1].is_ascii_digit()
            {
                text.push('.');
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    text.push(chars[i]);
                    i += 1;
                }
            }
        }

        if is_numeral(&text) && start > 0 && matches!(chars[start - 1], '+' | '-') && !prev_is_word(&chars, start - 1)
        {
            text.insert(0, chars[start - 1]);
        }
        // Non-empty and whitespace-free by construction.
        if let Some(token) = Token::new(text) {
            tokens.push(token);
        }
    }
    tokens
}

fn prev_is_word(chars: &[char], i: usize) -> bool {
    i > 0 && chars[i - 1].is_alphanumeric()
}

/// Joins tokens with single spaces; display only.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.text());
    }
    out
}
