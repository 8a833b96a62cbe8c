use crate::agent::Action;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no standalone action code in response")]
pub struct TranslationFailure;

/// Extracts the first standalone action code (1-4) from a free-text reply.
///
/// A digit is standalone when it is not adjacent to another ASCII letter or
/// digit and is not part of a decimal such as `2.5`. Total over any byte input.
pub fn translate(response: impl AsRef<[u8]>) -> Result<Action, TranslationFailure> {
    standalone_codes(response.as_ref()).next().ok_or(TranslationFailure)
}

fn standalone_codes(bytes: &[u8]) -> impl Iterator<Item = Action> + '_ {
    (0..bytes.len()).filter_map(move |i| {
        let b = bytes[i];
        if !(b'1'..=b'4').contains(&b) {
            return None;
        }
        let prev = i.checked_sub(1).map(|j| bytes[j]);
        let next = bytes.get(i + 1).copied();
        if prev.is_some_and(|c| c.is_ascii_alphanumeric()) || next.is_some_and(|c| c.is_ascii_alphanumeric()) {
            return None;
        }
        let decimal_before = prev == Some(b'.') && i >= 2 && bytes[i - 2].is_ascii_digit();
        let decimal_after = next == Some(b'.') && bytes.get(i + 2).is_some_and(u8::is_ascii_digit);
        if decimal_before || decimal_after {
            return None;
        }
        Action::from_code(b - b'0')
    })
}

/// True if `action`'s code occurs standalone anywhere in `response`.
pub fn appears_standalone(response: impl AsRef<[u8]>, action: Action) -> bool {
    standalone_codes(response.as_ref()).any(|a| a == action)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_code() {
        assert_eq!(translate("4"), Ok(Action::Handoff));
        assert_eq!(translate(" 3\n"), Ok(Action::Maintain));
    }

    #[test]
    fn first_code_in_sentence() {
        assert_eq!(translate("I recommend action 2 (decrease power)."), Ok(Action::Decrease));
        assert_eq!(translate("Either 1 or 4."), Ok(Action::Increase));
    }

    #[test]
    fn embedded_digits_are_ignored() {
        assert_eq!(translate("raise power by 10 dBm"), Err(TranslationFailure));
        assert_eq!(translate("power 2.5 dB, model v4, sonnet4"), Err(TranslationFailure));
        assert_eq!(translate("42 then 3"), Ok(Action::Maintain));
        assert_eq!(translate("code: 5"), Err(TranslationFailure));
        assert_eq!(translate(""), Err(TranslationFailure));
    }

    #[test]
    fn punctuation_is_a_boundary() {
        assert_eq!(translate("(2)"), Ok(Action::Decrease));
        assert_eq!(translate("answer=1."), Ok(Action::Increase));
        assert_eq!(translate("1.\n"), Ok(Action::Increase));
    }

    #[test]
    fn raw_bytes() {
        assert_eq!(translate([0xff, b' ', b'4', 0x80]), Ok(Action::Handoff));
    }
}
