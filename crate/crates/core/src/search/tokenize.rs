use unicode_general_category::{get_general_category, GeneralCategory};

const ZWNJ: char = '\u{200C}';
const ZWJ: char = '\u{200D}';

/// Letters, digits, and the combining and joining marks scripts such as
/// Devanagari, Arabic or Persian need inside words.
pub fn is_token_char(c: char) -> bool {
    if c.is_alphanumeric() || c == ZWJ || c == ZWNJ {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::NonspacingMark | GeneralCategory::SpacingMark | GeneralCategory::EnclosingMark
    )
}

/// Lowercased word tokens of `text`. A `#` or `@` that starts a word stays
/// attached to it, so hashtags and mentions remain searchable; inside a word
/// (`me@home`) it separates.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    let mut after_word = false;
    while let Some(c) = chars.next() {
        if is_token_char(c) {
            current.extend(c.to_lowercase());
            after_word = true;
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if (c == '#' || c == '@') && !after_word && chars.peek().is_some_and(|&n| is_token_char(n)) {
            current.push(c);
        }
        after_word = false;
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("Eating a sandwich!"), ["eating", "a", "sandwich"]);
        assert_eq!(tokenize("#barcamp rocks @chris"), ["#barcamp", "rocks", "@chris"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" !?. # @ ").is_empty());
    }

    #[test]
    fn hashes_and_mentions() {
        assert_eq!(tokenize("a##b @@c #"), ["a", "#b", "@c"]);
        assert_eq!(tokenize("mail me@home.net"), ["mail", "me", "home", "net"]);
        assert_eq!(tokenize("RT @Obama: YES"), ["rt", "@obama", "yes"]);
    }

    #[test]
    fn scripts_and_marks() {
        assert_eq!(tokenize("CAFÉ Straße"), ["café", "straße"]);
        assert_eq!(tokenize("cafe\u{301} ok"), ["cafe\u{301}", "ok"]);
        assert_eq!(tokenize("می‌خواهم ایران"), ["می\u{200C}خواهم", "ایران"]);
        assert_eq!(tokenize("हिन्दी"), ["हिन्दी"]);
        assert_eq!(tokenize("東京 2009年"), ["東京", "2009年"]);
        assert_eq!(tokenize("http://bit.ly/x1"), ["http", "bit", "ly", "x1"]);
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_and_nonempty(s in "\\PC{0,60}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert_eq!(t.to_lowercase(), t.clone());
                let body = t.strip_prefix(['#', '@']).unwrap_or(&t);
                prop_assert!(body.chars().all(is_token_char));
            }
        }

        #[test]
        fn tokenizing_is_stable(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }
    }
}
