//! Dictionary-free syllable estimate.
//!
//! Counts maximal vowel groups over `a e i o u y`, with `y` read as a
//! consonant at the start of a word or between two vowels. A trailing `e`
//! after a consonant is silent unless the word ends in consonant + `le`.
//! Compounds and suffixed forms whose stem ends in a silent `e`
//! (`fire|fighter`, `care|ful`, `love|ly`) are counted part by part.

const SUFFIXES: &[&str] = &["fighters", "fighter", "ful", "less", "ly", "ment", "ness", "work", "time"];

/// Syllables in one token. Tokens without letters count 0; any token with
/// letters counts at least 1. Apostrophes are dropped and other
/// non-letters split the token into parts that are counted separately.
pub fn count_syllables(word: &str) -> usize {
    let cleaned: String = word
        .chars()
        .filter(|c| *c != '\'' && *c != '\u{2019}')
        .flat_map(char::to_lowercase)
        .collect();
    cleaned
        .split(|c: char| !c.is_alphabetic())
        .filter(|part| !part.is_empty())
        .map(part_syllables)
        .sum()
}

fn part_syllables(part: &str) -> usize {
    for suffix in SUFFIXES {
        if let Some(stem) = part.strip_suffix(suffix) {
            if stem.len() >= 3 && stem.ends_with('e') && vowel_groups(&stem[..stem.len() - 1]) > 0 {
                return basic(stem) + basic(suffix);
            }
        }
    }
    basic(part)
}

fn basic(word: &str) -> usize {
    let chars: Vec<char> = word.chars().collect();
    let mut groups = vowel_groups(word);
    let n = chars.len();
    if groups > 1 && n >= 2 && chars[n - 1] == 'e' && !is_vowel_at(&chars, n - 2) {
        let consonant_le = n >= 3 && chars[n - 2] == 'l' && !is_vowel_at(&chars, n - 3);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

fn vowel_groups(word: &str) -> usize {
    let chars: Vec<char> = word.chars().collect();
    let mut groups = 0;
    let mut in_group = false;
    for i in 0..chars.len() {
        let v = is_vowel_at(&chars, i);
        if v && !in_group {
            groups += 1;
        }
        in_group = v;
    }
    groups
}

fn is_plain_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn is_vowel_at(chars: &[char], i: usize) -> bool {
    match chars[i] {
        'y' => {
            let next_vowel = chars.get(i + 1).copied().is_some_and(is_plain_vowel);
            let prev_vowel = i > 0 && is_plain_vowel(chars[i - 1]);
            !(i == 0 && next_vowel) && !(prev_vowel && next_vowel)
        }
        c => is_plain_vowel(c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_cases() {
        assert_eq!(count_syllables("cat"), 1);
        assert_eq!(count_syllables("firefighter"), 3);
        assert_eq!(count_syllables("123"), 0);
        assert_eq!(count_syllables(""), 0);
    }

    #[test]
    fn silent_e_and_le() {
        assert_eq!(count_syllables("make"), 1);
        assert_eq!(count_syllables("little"), 2);
        assert_eq!(count_syllables("whale"), 1);
        assert_eq!(count_syllables("free"), 1);
        assert_eq!(count_syllables("the"), 1);
    }

    #[test]
    fn y_as_consonant() {
        assert_eq!(count_syllables("yellow"), 2);
        assert_eq!(count_syllables("playing"), 2);
        assert_eq!(count_syllables("happy"), 2);
        assert_eq!(count_syllables("you"), 1);
    }

    #[test]
    fn punctuation_and_apostrophes() {
        assert_eq!(count_syllables("Let's"), 1);
        assert_eq!(count_syllables("\"Okay.\""), 2);
        assert_eq!(count_syllables("fire-truck"), 2);
        assert_eq!(count_syllables("Alex's"), 2);
    }
}
