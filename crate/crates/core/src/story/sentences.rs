//! Sentence counting.
//!
//! A boundary is a run of terminator characters (`.`, `!`, `?`) at the end of
//! a whitespace-delimited token, ignoring trailing closing quotes and
//! brackets. A run counts once, so `...` and `?!` are single boundaries.
//! Terminators inside a token (`3.5`, `e.g`, `a.m`) never end a sentence, and
//! a token that matches the abbreviation list suppresses its boundary.

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "sr.", "jr.", "mt.", "e.g.", "i.e.", "etc.",
    "vs.", "a.m.", "p.m.", "no.", "jan.", "feb.", "aug.", "sept.", "oct.", "nov.", "dec.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{201c}', '\u{2018}', '\u{ab}'];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\u{2026}')
}

/// True when `token` (one whitespace-delimited piece) ends a sentence.
pub fn ends_sentence(token: &str) -> bool {
    let core = token.trim_end_matches(CLOSERS);
    let Some(last) = core.chars().last() else {
        return false;
    };
    if !is_terminator(last) {
        return false;
    }
    let bare = core.trim_start_matches(OPENERS).to_lowercase();
    // Only a lone period can be an abbreviation; "Dr.!" still ends.
    let run_start = bare.trim_end_matches(is_terminator);
    let run = &bare[run_start.len()..];
    !(run == "." && ABBREVIATIONS.contains(&bare.as_str()))
}

pub fn count_sentences(text: &str) -> usize {
    text.split_whitespace().filter(|t| ends_sentence(t)).count()
}

/// Splits `text` into sentences at the same boundaries [`count_sentences`]
/// counts. A trailing fragment without a terminator is kept as the last item.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for token in text.split_whitespace() {
        current.push(token);
        if ends_sentence(token) {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(count_sentences(""), 0);
        assert_eq!(count_sentences("   \n "), 0);
    }

    #[test]
    fn two_terminators() {
        assert_eq!(count_sentences("Max smiles. Alex is glad!"), 2);
    }

    #[test]
    fn abbreviation_suppresses_boundary() {
        assert_eq!(count_sentences("Mr. Kim waved."), 1);
        assert_eq!(count_sentences("Dr. Park and Mrs. Choi say hi. We wave back."), 2);
        assert_eq!(count_sentences("Bring toys, e.g. a ball. Then play."), 2);
    }

    #[test]
    fn ellipsis_and_runs_count_once() {
        assert_eq!(count_sentences("Wait... Max is here?!"), 2);
        assert_eq!(count_sentences("Hmm\u{2026} okay."), 2);
    }

    #[test]
    fn decimals_and_internal_periods_do_not_split() {
        assert_eq!(count_sentences("The slide is 2.5 meters tall."), 1);
        assert_eq!(count_sentences("We leave at 9 a.m. today."), 1);
    }

    #[test]
    fn quotes_after_terminator() {
        assert_eq!(count_sentences("\"Let's take turns.\" Max nods."), 2);
        assert_eq!(count_sentences("Max says, \"Okay!\""), 1);
    }

    #[test]
    fn unterminated_fragment_is_not_counted() {
        assert_eq!(count_sentences("Playing together"), 0);
        assert_eq!(split_sentences("One. Two"), vec!["One.", "Two"]);
    }
}
