//! Dirichlet polynomial symbols `c0*s + c1 + sum c_n n^-s`: parsing, printing, JSON.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! symbol := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number ['/' number] ['i'] | 'i' | 's' | int '^' ( '-s' | '(-s)' ) | '(' symbol ')'
//! ```
//!
//! A term may contain at most one `s` or `n^-s` factor; parenthesised groups must be constant.

use crate::error::{Error, Result};
use crate::scalar::{format_rational, parse_rational};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;

/// A complex coefficient, exact when it came from a rational literal.
#[derive(Clone, Debug, PartialEq)]
pub enum Coef {
    Exact { re: BigRational, im: BigRational },
    Float(Complex64),
}

impl Coef {
    pub fn zero() -> Self {
        Coef::Exact { re: BigRational::zero(), im: BigRational::zero() }
    }

    pub fn real(r: BigRational) -> Self {
        Coef::Exact { re: r, im: BigRational::zero() }
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Coef::real(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn to_c64(&self) -> Complex64 {
        match self {
            Coef::Exact { re, im } => Complex64::new(re.to_f64().unwrap_or(f64::NAN), im.to_f64().unwrap_or(f64::NAN)),
            Coef::Float(z) => *z,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coef::Exact { re, im } => re.is_zero() && im.is_zero(),
            Coef::Float(z) => *z == Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Coef::Exact { .. })
    }

    pub fn add(&self, o: &Coef) -> Coef {
        match (self, o) {
            (Coef::Exact { re: a, im: b }, Coef::Exact { re: c, im: d }) => Coef::Exact { re: a + c, im: b + d },
            _ => Coef::Float(self.to_c64() + o.to_c64()),
        }
    }

    pub fn mul(&self, o: &Coef) -> Coef {
        match (self, o) {
            (Coef::Exact { re: a, im: b }, Coef::Exact { re: c, im: d }) => {
                Coef::Exact { re: a * c - b * d, im: a * d + b * c }
            }
            _ => Coef::Float(self.to_c64() * o.to_c64()),
        }
    }

    pub fn neg(&self) -> Coef {
        match self {
            Coef::Exact { re, im } => Coef::Exact { re: -re, im: -im },
            Coef::Float(z) => Coef::Float(-z),
        }
    }

    fn is_one(&self) -> bool {
        match self {
            Coef::Exact { re, im } => re.is_one() && im.is_zero(),
            Coef::Float(z) => *z == Complex64::new(1.0, 0.0),
        }
    }

    /// True for a negative real or negative imaginary coefficient, so the printer emits ` - `.
    fn has_leading_minus(&self) -> bool {
        match self {
            Coef::Exact { re, im } => {
                (im.is_zero() && re.is_negative()) || (re.is_zero() && im.is_negative())
            }
            Coef::Float(z) => (z.im == 0.0 && z.re < 0.0) || (z.re == 0.0 && z.im < 0.0),
        }
    }

    fn body(&self) -> String {
        fn f(x: f64) -> String {
            format!("{x:?}")
        }
        match self {
            Coef::Exact { re, im } if im.is_zero() => format_rational(re),
            Coef::Exact { re, im } if re.is_zero() => format!("{}i", format_rational(im)),
            Coef::Exact { re, im } => {
                let sign = if im.is_negative() { "-" } else { "+" };
                format!("({}{}{}i)", format_rational(re), sign, format_rational(&im.abs()))
            }
            Coef::Float(z) if z.im == 0.0 => f(z.re),
            Coef::Float(z) if z.re == 0.0 => format!("{}i", f(z.im)),
            Coef::Float(z) => {
                let sign = if z.im < 0.0 { "-" } else { "+" };
                format!("({}{}{}i)", f(z.re), sign, f(z.im.abs()))
            }
        }
    }

    fn json_part(x: &BigRational) -> Value {
        if x.denom().is_one() {
            if let Some(v) = x.numer().to_i64() {
                return json!(v);
            }
        }
        Value::String(format_rational(x))
    }

    pub fn to_json(&self) -> Value {
        match self {
            Coef::Exact { re, im } => json!([Self::json_part(re), Self::json_part(im)]),
            Coef::Float(z) => json!([z.re, z.im]),
        }
    }

    fn part_from_json(v: &Value) -> Result<BigRational> {
        let bad = || Error::Parse { pos: 0, msg: format!("expected a number or \"p/q\" string, found {v}") };
        match v {
            Value::Number(n) => parse_rational(&n.to_string()).ok_or_else(bad),
            Value::String(s) => parse_rational(s).ok_or_else(bad),
            _ => Err(bad()),
        }
    }

    /// Accepts `[re, im]`, a bare number, or a `"p/q"` string.
    pub fn from_json(v: &Value) -> Result<Coef> {
        match v {
            Value::Array(a) if a.len() == 2 => {
                Ok(Coef::Exact { re: Self::part_from_json(&a[0])?, im: Self::part_from_json(&a[1])? })
            }
            Value::Number(_) | Value::String(_) => Ok(Coef::real(Self::part_from_json(v)?)),
            _ => Err(Error::Parse { pos: 0, msg: format!("bad coefficient {v}") }),
        }
    }
}

/// `phi(s) = c0*s + c1 + sum_{n in terms} c_n n^{-s}` with zero coefficients removed.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletSymbol {
    pub c0: u32,
    pub c1: Coef,
    pub terms: BTreeMap<u64, Coef>,
}

impl DirichletSymbol {
    /// Build and normalize; rejects keys below 2.
    pub fn new(c0: u32, c1: Coef, terms: impl IntoIterator<Item = (u64, Coef)>) -> Result<Self> {
        let mut map: BTreeMap<u64, Coef> = BTreeMap::new();
        for (n, c) in terms {
            if n < 2 {
                return Err(Error::InvalidSymbol(format!("frequency {n} must be at least 2")));
            }
            let e = map.entry(n).or_insert_with(Coef::zero);
            *e = e.add(&c);
        }
        map.retain(|_, c| !c.is_zero());
        Ok(Self { c0, c1, terms: map })
    }

    /// The frequency set of the non-constant part.
    pub fn support(&self) -> Vec<u64> {
        self.terms.keys().copied().collect()
    }

    pub fn is_constant(&self) -> bool {
        self.c0 == 0 && self.terms.is_empty()
    }

    /// Sum of |c_n|, an upper bound for the oscillating part on the closed half-plane.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.to_c64().norm()).sum()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "c0": self.c0,
            "c1": self.c1.to_json(),
            "terms": self.terms.iter().map(|(n, c)| json!({"n": n, "c": c.to_json()})).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let perr = |m: &str| Error::Parse { pos: 0, msg: m.to_string() };
        let obj = v.as_object().ok_or_else(|| perr("symbol JSON must be an object"))?;
        let c0 = match obj.get("c0") {
            None => 0,
            Some(x) => {
                let r = Coef::part_from_json(x)?;
                check_c0(&Coef::real(r))?
            }
        };
        let c1 = match obj.get("c1") {
            None => Coef::zero(),
            Some(x) => Coef::from_json(x)?,
        };
        let mut terms = Vec::new();
        if let Some(list) = obj.get("terms") {
            let list = list.as_array().ok_or_else(|| perr("\"terms\" must be an array"))?;
            for t in list {
                let n = t.get("n").and_then(Value::as_u64).ok_or_else(|| perr("term needs integer \"n\""))?;
                let c = Coef::from_json(t.get("c").ok_or_else(|| perr("term needs \"c\""))?)?;
                terms.push((n, c));
            }
        }
        Self::new(c0, c1, terms)
    }
}

impl fmt::Display for DirichletSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut pieces: Vec<(bool, String)> = Vec::new();
        if self.c0 > 0 {
            pieces.push((false, if self.c0 == 1 { "s".into() } else { format!("{}*s", self.c0) }));
        }
        if !self.c1.is_zero() || (self.c0 == 0 && self.terms.is_empty()) {
            let neg = self.c1.has_leading_minus();
            let c = if neg { self.c1.neg() } else { self.c1.clone() };
            pieces.push((neg, c.body()));
        }
        for (n, c) in &self.terms {
            let neg = c.has_leading_minus();
            let c = if neg { c.neg() } else { c.clone() };
            let s = if c.is_one() { format!("{n}^-s") } else { format!("{}*{n}^-s", c.body()) };
            pieces.push((neg, s));
        }
        for (i, (neg, s)) in pieces.iter().enumerate() {
            match (i, neg) {
                (0, false) => write!(f, "{s}")?,
                (0, true) => write!(f, "-{s}")?,
                (_, false) => write!(f, " + {s}")?,
                (_, true) => write!(f, " - {s}")?,
            }
        }
        Ok(())
    }
}

fn check_c0(c: &Coef) -> Result<u32> {
    match c {
        Coef::Exact { re, im } if im.is_zero() && re.is_integer() => {
            if re.is_negative() {
                Err(Error::InvalidSymbol(format!("characteristic c0 = {} is negative", format_rational(re))))
            } else {
                re.to_integer()
                    .to_u32()
                    .ok_or_else(|| Error::InvalidSymbol("characteristic c0 too large".into()))
            }
        }
        _ => Err(Error::InvalidSymbol("characteristic c0 must be a nonnegative integer".into())),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Const,
    S,
    Freq(u64),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Unsigned decimal literal with optional exponent; returns the raw text.
    fn number_text(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut p = self.pos;
        while p < s.len() && (s[p].is_ascii_digit() || s[p] == b'.') {
            p += 1;
        }
        if p == start {
            return None;
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                while q < s.len() && s[q].is_ascii_digit() {
                    q += 1;
                }
                p = q;
            }
        }
        self.pos = p;
        std::str::from_utf8(&s[start..p]).ok()
    }

    /// Sum of signed terms until end of input or a closing parenthesis.
    fn sum(&mut self) -> Result<Vec<(Kind, Coef)>> {
        let mut out = Vec::new();
        let mut first = true;
        loop {
            let neg = match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    false
                }
                Some(b'-') => {
                    self.pos += 1;
                    true
                }
                _ if first => false,
                _ => break,
            };
            first = false;
            let (k, c) = self.term()?;
            out.push((k, if neg { c.neg() } else { c }));
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Kind, Coef)> {
        let mut kind = Kind::Const;
        let mut coef = Coef::ratio(1, 1);
        loop {
            let (k, c) = self.factor()?;
            if k != Kind::Const {
                if kind != Kind::Const {
                    return self.err("a term may contain at most one s or n^-s factor");
                }
                kind = k;
            }
            coef = coef.mul(&c);
            // `2s` is accepted as shorthand for `2*s`.
            if !self.eat(b'*') && self.peek() != Some(b's') {
                break;
            }
        }
        Ok((kind, coef))
    }

    fn expect_minus_s(&mut self) -> Result<()> {
        let paren = self.eat(b'(');
        if !self.eat(b'-') || !self.eat(b's') {
            return self.err("expected -s after ^");
        }
        if paren && !self.eat(b')') {
            return self.err("expected )");
        }
        Ok(())
    }

    fn factor(&mut self) -> Result<(Kind, Coef)> {
        match self.peek() {
            Some(b's') => {
                self.pos += 1;
                Ok((Kind::S, Coef::ratio(1, 1)))
            }
            Some(b'i') => {
                self.pos += 1;
                Ok((Kind::Const, Coef::Exact { re: BigRational::zero(), im: BigRational::one() }))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return self.err("expected )");
                }
                let mut acc = Coef::zero();
                for (k, c) in inner {
                    if k != Kind::Const {
                        return self.err("parenthesised groups must be constant");
                    }
                    acc = acc.add(&c);
                }
                Ok((Kind::Const, acc))
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => {
                let start = self.pos;
                let text = self.number_text().unwrap();
                if self.eat(b'^') {
                    let n: u64 = match text.parse() {
                        Ok(n) => n,
                        Err(_) => {
                            self.pos = start;
                            return self.err(format!("base {text} of n^-s must be an integer"));
                        }
                    };
                    if n <= 1 {
                        self.pos = start;
                        return Err(Error::InvalidSymbol(format!("frequency {n} must be at least 2")));
                    }
                    self.expect_minus_s()?;
                    return Ok((Kind::Freq(n), Coef::ratio(1, 1)));
                }
                let mut r = match parse_rational(text) {
                    Some(r) => r,
                    None => {
                        self.pos = start;
                        return self.err(format!("bad number {text}"));
                    }
                };
                if self.peek() == Some(b'/') {
                    self.pos += 1;
                    let here = self.pos;
                    let d = self.number_text().and_then(parse_rational);
                    match d {
                        Some(d) if !d.is_zero() => r /= d,
                        _ => {
                            self.pos = here;
                            return self.err("bad denominator");
                        }
                    }
                }
                if self.eat(b'i') {
                    Ok((Kind::Const, Coef::Exact { re: BigRational::zero(), im: r }))
                } else {
                    Ok((Kind::Const, Coef::real(r)))
                }
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parse the text grammar into a normalized symbol.
pub fn parse_symbol(text: &str) -> Result<DirichletSymbol> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    if p.peek().is_none() {
        return p.err("empty symbol");
    }
    let terms = p.sum()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    let mut c0 = Coef::zero();
    let mut c1 = Coef::zero();
    let mut rest = Vec::new();
    for (k, c) in terms {
        match k {
            Kind::Const => c1 = c1.add(&c),
            Kind::S => c0 = c0.add(&c),
            Kind::Freq(n) => rest.push((n, c)),
        }
    }
    DirichletSymbol::new(check_c0(&c0)?, c1, rest)
}

/// Accept either the text grammar or the JSON form (detected by a leading `{`).
pub fn parse_symbol_input(text: &str) -> Result<DirichletSymbol> {
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse { pos: e.column(), msg: e.to_string() })?;
        DirichletSymbol::from_json(&v)
    } else {
        parse_symbol(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Coef {
        Coef::ratio(n, d)
    }

    #[test]
    fn parses_mixed_example() {
        let s = parse_symbol("9/2 - 2^-s - 3^-s - 2*6^-s").unwrap();
        assert_eq!(s.c0, 0);
        assert_eq!(s.c1, r(9, 2));
        let want: BTreeMap<u64, Coef> = [(2, r(-1, 1)), (3, r(-1, 1)), (6, r(-2, 1))].into_iter().collect();
        assert_eq!(s.terms, want);
    }

    #[test]
    fn constant_and_cancellation() {
        let s = parse_symbol("1").unwrap();
        assert_eq!((s.c0, s.c1.clone(), s.terms.len()), (0, r(1, 1), 0));
        let s = parse_symbol("s + 2^-s - 2^-s").unwrap();
        assert_eq!((s.c0, s.c1.is_zero(), s.terms.len()), (1, true, 0));
    }

    #[test]
    fn imaginary_and_parenthesised_coefficients() {
        let s = parse_symbol("(1/2 + 3i)*2^(-s) + 0.25i*5^-s + 2s").unwrap();
        assert_eq!(s.c0, 2);
        assert_eq!(s.terms[&2], Coef::Exact { re: q(1, 2), im: q(3, 1) });
        assert_eq!(s.terms[&5], Coef::Exact { re: q(0, 1), im: q(1, 4) });
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn duplicate_frequencies_merge() {
        let s = parse_symbol("1 + 2^-s + 3*2^-s").unwrap();
        assert_eq!(s.terms[&2], r(4, 1));
    }

    #[test]
    fn rejections() {
        assert!(matches!(parse_symbol("1^-s"), Err(Error::InvalidSymbol(_))));
        assert!(matches!(parse_symbol("-s + 1"), Err(Error::InvalidSymbol(_))));
        assert!(matches!(parse_symbol("1/2*s"), Err(Error::InvalidSymbol(_))));
        assert!(matches!(parse_symbol("2^-s*3^-s"), Err(Error::Parse { .. })));
        assert!(matches!(parse_symbol("2 +"), Err(Error::Parse { .. })));
        assert!(matches!(parse_symbol("2^-t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_symbol(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn prints_canonically() {
        let s = parse_symbol("-2*6^-s + 9/2 - 3^-s - 2^-s").unwrap();
        assert_eq!(s.to_string(), "9/2 - 2^-s - 3^-s - 2*6^-s");
        assert_eq!(parse_symbol("s").unwrap().to_string(), "s");
        assert_eq!(parse_symbol("0").unwrap().to_string(), "0");
    }

    #[test]
    fn json_forms() {
        let a = parse_symbol_input(r#"{"c0":0,"c1":[4.5,0],"terms":[{"n":2,"c":[-1,0]},{"n":3,"c":[-1,0]},{"n":6,"c":["-2","0"]}]}"#).unwrap();
        let b = parse_symbol("9/2 - 2^-s - 3^-s - 2*6^-s").unwrap();
        assert_eq!(a, b);
        let back = DirichletSymbol::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
    }

    fn arb_coef() -> impl Strategy<Value = Coef> {
        (-20i64..=20, 1i64..=7, -20i64..=20, 1i64..=7)
            .prop_map(|(a, b, c, d)| Coef::Exact { re: q(a, b), im: q(c, d) })
    }

    fn arb_symbol() -> impl Strategy<Value = DirichletSymbol> {
        (0u32..3, arb_coef(), proptest::collection::vec((2u64..200, arb_coef()), 0..6))
            .prop_map(|(c0, c1, t)| DirichletSymbol::new(c0, c1, t).unwrap())
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(s in arb_symbol()) {
            let text = s.to_string();
            prop_assert_eq!(parse_symbol(&text).unwrap(), s.clone(), "{}", text);
        }

        #[test]
        fn json_round_trip(s in arb_symbol()) {
            prop_assert_eq!(DirichletSymbol::from_json(&s.to_json()).unwrap(), s);
        }
    }
}
