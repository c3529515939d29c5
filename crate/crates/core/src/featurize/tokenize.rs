//! A small tokenizer for social-media text.
//!
//! Rules, applied left to right:
//! - URLs (`http://`, `https://`, `www.`) become `<url>`; `@name` becomes `<user>`;
//! - emoticons from a fixed list are single tokens;
//! - runs of two or more `!`, `?` or `.` are single tokens;
//! - words are maximal runs of letters, digits, and apostrophes, with
//!   leading and trailing apostrophes trimmed;
//! - any other character separates tokens.
//!
//! All output is lowercase.

const EMOTICONS: &[&str] = &[
    ">:(", ":'(", ":-)", ":-(", ":-d", ":-p", ":-/", ";-)", ":)", ":(", ":d", ":p", ":/", ";)", ":o", ":|", "<3",
    "</3", "^_^", "-_-",
];

const SPECIAL: &[&str] = &["<url>", "<user>"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

fn starts_with_ci(haystack: &str, needle: &str) -> bool {
    haystack.len() >= needle.len()
        && haystack.is_char_boundary(needle.len())
        && haystack[..needle.len()].eq_ignore_ascii_case(needle)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if ["http://", "https://", "www."].iter().any(|p| starts_with_ci(rest, p)) {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push("<url>".to_string());
            rest = &rest[end..];
            continue;
        }
        if let Some(sp) = SPECIAL.iter().find(|s| starts_with_ci(rest, s)) {
            out.push((*sp).to_string());
            rest = &rest[sp.len()..];
            continue;
        }
        if c == '@' {
            let tail = &rest[1..];
            let n = tail.find(|ch: char| !(ch.is_alphanumeric() || ch == '_')).unwrap_or(tail.len());
            if n > 0 {
                out.push("<user>".to_string());
                rest = &tail[n..];
                continue;
            }
        }
        if !c.is_alphanumeric() {
            let emoticon = EMOTICONS
                .iter()
                .filter(|e| starts_with_ci(rest, e))
                .filter(|e| {
                    // a trailing letter must not run into a word (":Dude")
                    let next = rest[e.len()..].chars().next();
                    !(e.ends_with(|ch: char| ch.is_alphabetic()) && next.is_some_and(char::is_alphanumeric))
                })
                .max_by_key(|e| e.len());
            if let Some(e) = emoticon {
                out.push((*e).to_string());
                rest = &rest[e.len()..];
                continue;
            }
        }
        if matches!(c, '!' | '?' | '.') {
            let n = rest.find(|ch: char| !matches!(ch, '!' | '?' | '.')).unwrap_or(rest.len());
            if n >= 2 {
                out.push(rest[..n].to_string());
            }
            rest = &rest[n..];
            continue;
        }
        if is_word_char(c) {
            let n = rest.find(|ch: char| !is_word_char(ch)).unwrap_or(rest.len());
            let word = rest[..n].trim_matches('\'');
            if !word.is_empty() {
                out.push(word.to_lowercase());
            }
            rest = &rest[n..];
            continue;
        }
        rest = &rest[c.len_utf8()..];
    }
    out
}
