//! Number detection for business documents.
//!
//! Words are scanned for a decimal figure written with digits. The grammar is
//! fixed (no locale setting):
//!
//! * everything before the first digit and after the last digit is ignored,
//!   except a `-`/`+` sign before the first digit when no letter precedes it;
//! * the digits must form groups separated by single `,`, `.` or space
//!   characters;
//! * the last `,`/`.` separator is the decimal point when exactly 1, 2 or at
//!   least 4 digits follow it, otherwise every separator groups thousands.
//!
//! Values are exact decimals so that ordering ties are detected exactly.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_traits::{Signed, Zero};

use crate::doc::Document;

/// Exact decimal `mantissa / 10^scale`.
#[derive(Debug, Clone)]
pub struct Decimal {
    mantissa: BigInt,
    scale: u32,
}

impl Decimal {
    pub fn new(mantissa: BigInt, scale: u32) -> Self {
        Decimal { mantissa, scale }
    }

    pub fn from_i64(v: i64) -> Self {
        Decimal::new(BigInt::from(v), 0)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    fn rescaled(&self, scale: u32) -> BigInt {
        debug_assert!(scale >= self.scale);
        &self.mantissa * BigInt::from(10u32).pow(scale - self.scale)
    }

    /// Parses the canonical rendering produced by `Display`.
    pub fn parse_canonical(s: &str) -> Option<Self> {
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if body.contains('.') && frac.is_empty() {
            return None;
        }
        let digits = format!("{int}{frac}");
        let mut mantissa: BigInt = digits.parse().ok()?;
        if neg {
            mantissa = -mantissa;
        }
        Some(Decimal::new(mantissa, frac.len() as u32))
    }

    /// Lossy conversion for display or feature purposes.
    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().unwrap_or(f64::NAN)
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        self.rescaled(scale).cmp(&other.rescaled(scale))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.mantissa.abs().to_string();
        let scale = self.scale as usize;
        let padded = if digits.len() <= scale {
            format!("{}{digits}", "0".repeat(scale + 1 - digits.len()))
        } else {
            digits
        };
        let sign = if self.mantissa.sign() == Sign::Minus { "-" } else { "" };
        if scale == 0 {
            write!(f, "{sign}{padded}")
        } else {
            let (int, frac) = padded.split_at(padded.len() - scale);
            write!(f, "{sign}{int}.{frac}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedNumber {
    pub word_read_index: usize,
    pub value: Decimal,
    pub raw: String,
}

/// Parses the figure contained in `word`, if any.
pub fn parse_number(word: &str) -> Option<Decimal> {
    let chars: Vec<char> = word.chars().collect();
    let first = chars.iter().position(|c| c.is_ascii_digit())?;
    let last = chars.iter().rposition(|c| c.is_ascii_digit())?;
    let prefix = &chars[..first];
    let negative = !prefix.iter().any(|c| c.is_alphabetic()) && prefix.iter().rev().find(|c| **c == '-' || **c == '+') == Some(&'-');

    // digit groups and the separator in front of each group
    let mut groups: Vec<String> = vec![String::new()];
    let mut seps: Vec<char> = Vec::new();
    for &c in &chars[first..=last] {
        if c.is_ascii_digit() {
            groups.last_mut().expect("non-empty").push(c);
        } else if matches!(c, ',' | '.' | ' ') {
            if groups.last().is_some_and(String::is_empty) {
                return None;
            }
            seps.push(c);
            groups.push(String::new());
        } else {
            return None;
        }
    }

    let decimal_at = match seps.last() {
        Some(&sep) if sep != ' ' => {
            let trailing = groups.last().map_or(0, String::len);
            (trailing != 3).then_some(groups.len() - 1)
        }
        _ => None,
    };
    let (int_groups, frac) = match decimal_at {
        Some(i) => (&groups[..i], groups[i].as_str()),
        None => (&groups[..], ""),
    };
    let digits: String = int_groups.concat() + frac;
    let mut mantissa: BigInt = digits.parse().ok()?;
    if negative && !mantissa.is_zero() {
        mantissa = -mantissa;
    }
    Some(Decimal::new(mantissa, frac.len() as u32))
}

/// All parsable numbers of a document, in read order.
pub fn find_numbers(doc: &Document) -> Vec<ParsedNumber> {
    doc.words
        .iter()
        .filter_map(|w| {
            parse_number(&w.text).map(|value| ParsedNumber {
                word_read_index: w.read_index,
                value,
                raw: w.text.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::BBox;
    use proptest::prelude::*;

    fn dec(s: &str) -> Decimal {
        Decimal::parse_canonical(s).unwrap()
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(parse_number("$1,234.50").unwrap().to_string(), "1234.50");
        assert_eq!(parse_number("twelve"), None);
        assert_eq!(parse_number("1.234.567,89").unwrap().to_string(), "1234567.89");
        assert_eq!(parse_number("PO-4711").unwrap().to_string(), "4711");
    }

    #[test]
    fn separator_disambiguation() {
        assert_eq!(parse_number("1,234").unwrap(), dec("1234"));
        assert_eq!(parse_number("1,23").unwrap().to_string(), "1.23");
        assert_eq!(parse_number("1.2").unwrap().to_string(), "1.2");
        assert_eq!(parse_number("3.14159").unwrap().to_string(), "3.14159");
        assert_eq!(parse_number("1 000").unwrap(), dec("1000"));
        assert_eq!(parse_number("75%").unwrap(), dec("75"));
        assert_eq!(parse_number("(12.00)").unwrap().to_string(), "12.00");
        assert_eq!(parse_number("#:0042").unwrap().to_string(), "42");
    }

    #[test]
    fn signs() {
        assert_eq!(parse_number("-12.50").unwrap(), dec("-12.5"));
        assert_eq!(parse_number("$-3").unwrap(), dec("-3"));
        assert_eq!(parse_number("+7").unwrap(), dec("7"));
        assert_eq!(parse_number("-0").unwrap(), dec("0"));
    }

    #[test]
    fn non_numbers() {
        assert_eq!(parse_number(""), None);
        assert_eq!(parse_number("Total:"), None);
        assert_eq!(parse_number("2023-04-17"), None);
        assert_eq!(parse_number("12/04/2023"), None);
        assert_eq!(parse_number("1,,2"), None);
    }

    #[test]
    fn exact_comparison() {
        assert_eq!(dec("12.00"), dec("12"));
        assert!(dec("0.1") < dec("0.10000000000000000001"));
        assert!(dec("-1") < dec("0.0"));
    }

    #[test]
    fn find_numbers_in_read_order() {
        let doc = Document::from_words("d", ["Total", "$12.00", "qty", "3"].iter().map(|w| (w.to_string(), BBox::ZERO, 0)));
        let found = find_numbers(&doc);
        let values: Vec<String> = found.iter().map(|n| n.value.to_string()).collect();
        assert_eq!(values, ["12.00", "3"]);
        assert_eq!(found[0].word_read_index, 1);
        assert_eq!(found[1].raw, "3");

        let none = Document::from_words("e", [("abc".to_string(), BBox::ZERO, 0)]);
        assert!(find_numbers(&none).is_empty());
    }

    #[test]
    fn thousand_numeric_words_keep_order() {
        let doc = Document::from_words("d", (0..1000).map(|i| (format!("{i}.5"), BBox::ZERO, 0)));
        let found = find_numbers(&doc);
        assert_eq!(found.len(), 1000);
        for (i, n) in found.iter().enumerate() {
            assert_eq!(n.word_read_index, i);
            assert_eq!(n.value, dec(&format!("{i}.5")));
        }
    }

    proptest! {
        #[test]
        fn rendering_round_trips(m in any::<i64>(), scale in 0u32..12) {
            let d = Decimal::new(BigInt::from(m), scale);
            let back = Decimal::parse_canonical(&d.to_string()).unwrap();
            prop_assert_eq!(back.mantissa(), d.mantissa());
            prop_assert_eq!(back.scale(), d.scale());
        }

        #[test]
        fn parse_is_total(word in "\\PC{0,16}") {
            let a = parse_number(&word);
            let b = parse_number(&word);
            prop_assert_eq!(a.map(|d| d.to_string()), b.map(|d| d.to_string()));
        }

        #[test]
        fn ordering_is_trichotomous(a in any::<i32>(), b in any::<i32>(), sa in 0u32..4, sb in 0u32..4) {
            let x = Decimal::new(BigInt::from(a), sa);
            let y = Decimal::new(BigInt::from(b), sb);
            let n = [x < y, x == y, x > y].iter().filter(|c| **c).count();
            prop_assert_eq!(n, 1);
            // same ordering as exact rational cross-multiplication
            let lhs = i128::from(a) * 10i128.pow(sb);
            let rhs = i128::from(b) * 10i128.pow(sa);
            prop_assert_eq!(x.cmp(&y), lhs.cmp(&rhs));
        }
    }
}
