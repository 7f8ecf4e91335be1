//! Versioned text serialization for trained models.
//!
//! A record is a sequence of lines, each a key followed by
//! whitespace-separated values. The first line is the format header
//! `oktacal-model 1`; the second is always `kind <family>`. Floats are
//! written with Rust's shortest round-trip formatting, so parsing a record
//! reproduces the trained parameters bit for bit. Blank lines and lines
//! starting with `#` are ignored on input.
//!
//! Example:
//!
//! ```text
//! oktacal-model 1
//! kind mlr
//! variant mlr6
//! dim 6
//! l2 0
//! intercepts -0.1 0.2 ... (8 values)
//! weights_0 ... (dim values, class y1)
//! ...
//! weights_7 ... (dim values, class y8)
//! ```

use crate::error::Error;
use crate::Result;

pub(crate) const HEADER: &str = "oktacal-model 1";

/// Incremental writer for one record.
pub(crate) struct RecordWriter {
    buf: String,
}

impl RecordWriter {
    pub fn new(kind: &str) -> RecordWriter {
        let mut buf = String::new();
        buf.push_str(HEADER);
        buf.push('\n');
        buf.push_str("kind ");
        buf.push_str(kind);
        buf.push('\n');
        RecordWriter { buf }
    }

    pub fn str_field(&mut self, key: &str, value: &str) {
        self.buf.push_str(key);
        self.buf.push(' ');
        self.buf.push_str(value);
        self.buf.push('\n');
    }

    pub fn usize_field(&mut self, key: &str, value: usize) {
        self.str_field(key, &value.to_string());
    }

    pub fn f64_field(&mut self, key: &str, value: f64) {
        self.str_field(key, &value.to_string());
    }

    pub fn f64s_field(&mut self, key: &str, values: impl IntoIterator<Item = f64>) {
        self.buf.push_str(key);
        for v in values {
            self.buf.push(' ');
            self.buf.push_str(&v.to_string());
        }
        self.buf.push('\n');
    }

    pub fn usizes_field(&mut self, key: &str, values: impl IntoIterator<Item = usize>) {
        self.buf.push_str(key);
        for v in values {
            self.buf.push(' ');
            self.buf.push_str(&v.to_string());
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Sequential reader over a record's key/value lines.
pub(crate) struct RecordReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> RecordReader<'a> {
    /// Opens a record, checking the version header.
    pub fn open(text: &'a str) -> Result<RecordReader<'a>> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        match lines.first() {
            Some(&(_, first)) if first == HEADER => Ok(RecordReader { lines, pos: 1 }),
            Some(&(n, other)) => Err(Error::parse(
                n,
                format!("expected header {HEADER:?}, found {other:?}"),
            )),
            None => Err(Error::parse(1, "empty model record")),
        }
    }

    /// 1-based line number of the current position, for error messages.
    pub fn line(&self) -> usize {
        self.lines
            .get(self.pos.saturating_sub(1))
            .map_or(0, |&(n, _)| n)
    }

    fn next(&mut self, key: &str) -> Result<(usize, std::str::SplitWhitespace<'a>)> {
        let &(n, line) = self.lines.get(self.pos).ok_or_else(|| {
            Error::parse(
                self.lines.last().map_or(0, |&(n, _)| n),
                format!("record ended before field {key:?}"),
            )
        })?;
        self.pos += 1;
        let mut parts = line.split_whitespace();
        let found = parts.next().unwrap_or("");
        if found != key {
            return Err(Error::parse(
                n,
                format!("expected field {key:?}, found {found:?}"),
            ));
        }
        Ok((n, parts))
    }

    /// Reads `key value` where value is a bare token.
    pub fn expect_str(&mut self, key: &str) -> Result<String> {
        let (n, mut parts) = self.next(key)?;
        let value = parts
            .next()
            .ok_or_else(|| Error::parse(n, format!("field {key:?} has no value")))?;
        if parts.next().is_some() {
            return Err(Error::parse(n, format!("field {key:?} has extra values")));
        }
        Ok(value.to_owned())
    }

    /// Reads `key tok1 tok2 ...`, returning the tokens after the key
    /// rejoined with single spaces (at least one required).
    pub fn expect_rest(&mut self, key: &str) -> Result<String> {
        let (n, parts) = self.next(key)?;
        let toks: Vec<&str> = parts.collect();
        if toks.is_empty() {
            return Err(Error::parse(n, format!("field {key:?} has no value")));
        }
        Ok(toks.join(" "))
    }

    pub fn expect_usize(&mut self, key: &str) -> Result<usize> {
        let (n, s) = (self.line_of_next(), self.expect_str(key)?);
        s.parse()
            .map_err(|_| Error::parse(n, format!("field {key:?}: bad integer {s:?}")))
    }

    pub fn expect_f64(&mut self, key: &str) -> Result<f64> {
        let (n, s) = (self.line_of_next(), self.expect_str(key)?);
        s.parse()
            .map_err(|_| Error::parse(n, format!("field {key:?}: bad number {s:?}")))
    }

    /// Reads `key v1 v2 ... vn` with exactly `len` floats.
    pub fn expect_f64s(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let (n, parts) = self.next(key)?;
        let mut out = Vec::with_capacity(len);
        for tok in parts {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(n, format!("field {key:?}: bad number {tok:?}")))?;
            out.push(v);
        }
        if out.len() != len {
            return Err(Error::parse(
                n,
                format!("field {key:?}: expected {len} values, found {}", out.len()),
            ));
        }
        Ok(out)
    }

    /// Reads `key i1 i2 ...` with any number of nonnegative integers.
    pub fn expect_usizes(&mut self, key: &str) -> Result<Vec<usize>> {
        let (n, parts) = self.next(key)?;
        let mut out = Vec::new();
        for tok in parts {
            let v: usize = tok
                .parse()
                .map_err(|_| Error::parse(n, format!("field {key:?}: bad index {tok:?}")))?;
            out.push(v);
        }
        Ok(out)
    }

    fn line_of_next(&self) -> usize {
        self.lines.get(self.pos).map_or(0, |&(n, _)| n)
    }

    /// True when every line has been consumed.
    #[cfg(test)]
    pub fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exact_floats() {
        let mut w = RecordWriter::new("mlr");
        let values = [0.1 + 0.2, f64::MIN_POSITIVE, -1.0 / 3.0, 1e300, f64::INFINITY];
        w.f64s_field("vals", values);
        w.f64_field("single", std::f64::consts::PI);
        let text = w.finish();

        let mut r = RecordReader::open(&text).unwrap();
        assert_eq!(r.expect_str("kind").unwrap(), "mlr");
        let back = r.expect_f64s("vals", 5).unwrap();
        for (a, b) in back.iter().zip(values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(r.expect_f64("single").unwrap(), std::f64::consts::PI);
        assert!(r.at_end());
    }

    #[test]
    fn header_and_field_errors_carry_line_numbers() {
        assert!(matches!(
            RecordReader::open("not-a-model 9"),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = format!("{HEADER}\nkind mlr\nvariant full7\n");
        let mut r = RecordReader::open(&text).unwrap();
        r.expect_str("kind").unwrap();
        assert!(matches!(
            r.expect_str("dim"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let text = format!("{HEADER}\n# trained on window 3\n\nkind gbm\n");
        let mut r = RecordReader::open(&text).unwrap();
        assert_eq!(r.expect_str("kind").unwrap(), "gbm");
    }

    #[test]
    fn wrong_arity_is_a_parse_error() {
        let text = format!("{HEADER}\nkind mlr\nvals 1 2 3\n");
        let mut r = RecordReader::open(&text).unwrap();
        r.expect_str("kind").unwrap();
        assert!(r.expect_f64s("vals", 4).is_err());
    }
}
