//! Final-answer extraction and comparison.
//!
//! Canonicalization rules, fixed here and applied to both sides:
//! 1. Extraction order: the last `\boxed{...}` expression; otherwise the text
//!    after the last `answer is` / `answer:` marker (case-insensitive, up to
//!    the end of the line); otherwise the last number-like token.
//! 2. The extracted expression is trimmed, stripped of surrounding `$`,
//!    trailing sentence punctuation, and thousands commas.
//! 3. If both sides parse as exact rationals (integer, finite decimal, or
//!    `a/b` fraction) they are compared as rationals, so `1/2` equals `0.5`.
//!    Otherwise the comparison is a case-insensitive string match.

/// Does the final step reach the gold answer? Unparseable answers are false.
pub fn check_answer(final_step: &str, gold: &str) -> bool {
    let extracted = match extract_answer(final_step) {
        Some(a) => a,
        None => return false,
    };
    let lhs = canonicalize(&extracted);
    let rhs = canonicalize(gold);
    match (parse_rational(&lhs), parse_rational(&rhs)) {
        (Some(a), Some(b)) => a == b,
        _ => !lhs.is_empty() && lhs.eq_ignore_ascii_case(&rhs),
    }
}

fn extract_answer(text: &str) -> Option<String> {
    if let Some(boxed) = last_boxed(text) {
        return Some(boxed);
    }
    let lower = text.to_ascii_lowercase();
    for marker in ["answer is", "answer:"] {
        if let Some(pos) = lower.rfind(marker) {
            let rest = &text[pos + marker.len()..];
            let line = rest.lines().next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some(line.to_string());
            }
        }
    }
    last_number(text)
}

fn last_boxed(text: &str) -> Option<String> {
    let start = text.rfind("\\boxed{")?;
    let inner = &text[start + "\\boxed{".len()..];
    let mut depth = 1usize;
    for (i, ch) in inner.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(inner[..i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

/// Last maximal substring that looks like a signed decimal or fraction.
fn last_number(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let mut start = i;
            if start > 0 && (bytes[start - 1] == b'-' || bytes[start - 1] == b'+') {
                start -= 1;
            }
            let mut end = i;
            while end < bytes.len()
                && (bytes[end].is_ascii_digit()
                    || bytes[end] == b'.'
                    || bytes[end] == b','
                    || bytes[end] == b'/')
            {
                end += 1;
            }
            // Back off trailing punctuation that is not part of a number.
            while end > start && matches!(bytes[end - 1], b'.' | b',' | b'/') {
                end -= 1;
            }
            best = Some((start, end));
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    best.map(|(s, e)| text[s..e].to_string())
}

fn canonicalize(text: &str) -> String {
    let mut s = text.trim().to_string();
    if s.starts_with('$') && s.ends_with('$') && s.len() >= 2 {
        s = s[1..s.len() - 1].trim().to_string();
    }
    while s.ends_with('.') || s.ends_with('!') || s.ends_with(',') {
        s.pop();
    }
    s = s.replace(',', "");
    s.trim().to_string()
}

/// Exact rational with `i128` parts, reduced, denominator positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rational {
    num: i128,
    den: i128,
}

impl Rational {
    fn new(num: i128, den: i128) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
        let sign = if (num < 0) ^ (den < 0) { -1 } else { 1 };
        Some(Rational {
            num: sign * (num.abs() / g.max(1)),
            den: den.abs() / g.max(1),
        })
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: i128 = num.trim().parse().ok()?;
        let d: i128 = den.trim().parse().ok()?;
        return Rational::new(n, d);
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = int_part.trim_start().starts_with('-');
        let int: i128 = if int_part.is_empty() || int_part == "-" || int_part == "+" {
            0
        } else {
            int_part.parse().ok()?
        };
        let scale = 10i128.checked_pow(frac_part.len() as u32)?;
        let frac: i128 = frac_part.parse().ok()?;
        let magnitude = int.checked_abs()?.checked_mul(scale)?.checked_add(frac)?;
        let num = if negative || int < 0 { -magnitude } else { magnitude };
        return Rational::new(num, scale);
    }
    let n: i128 = s.parse().ok()?;
    Rational::new(n, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_equals_decimal() {
        assert!(check_answer("The answer is 1/2", "0.5"));
    }

    #[test]
    fn exact_numeric_match() {
        assert!(check_answer("after simplifying, x = 42", "42"));
    }

    #[test]
    fn unparseable_is_false() {
        assert!(!check_answer("no answer given", "7"));
    }

    #[test]
    fn boxed_takes_priority() {
        assert!(check_answer("maybe 3, but \\boxed{12} is final", "12"));
        assert!(!check_answer("\\boxed{12} then noise 99", "99"));
    }

    #[test]
    fn thousands_commas_and_punctuation() {
        assert!(check_answer("The answer is 1,000.", "1000"));
        assert!(check_answer("answer: $-3/4$", "-0.75"));
    }

    #[test]
    fn string_answers_compare_case_insensitively() {
        assert!(check_answer("The answer is south", "South"));
        assert!(!check_answer("The answer is north", "South"));
    }

    #[test]
    fn negative_decimals() {
        assert!(check_answer("we get -2.50 in the end", "-5/2"));
    }
}
