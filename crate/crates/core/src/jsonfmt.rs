//! Byte-stable JSON: object keys sorted, two-space indentation, LF line
//! endings and every float written with exactly six decimals.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

pub(crate) const FLOAT_DECIMALS: usize = 6;

/// Rounds `v` to the value that survives a write/read cycle unchanged.
pub(crate) fn quantize(v: f64) -> f64 {
    format!("{v:.FLOAT_DECIMALS$}")
        .parse()
        .expect("formatted float parses")
}

struct FixedFloatFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for FixedFloatFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.FLOAT_DECIMALS$}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Canonical rendering of `value`, terminated by a newline.
pub(crate) fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // Round-tripping through Value sorts object keys.
    let value = serde_json::to_value(value)?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        FixedFloatFormatter {
            inner: PrettyFormatter::with_indent(b"  "),
        },
    );
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorts_keys_and_fixes_floats() {
        let v = json!({"b": 1.5, "a": [1, 0.1234567], "c": {"z": -0.0, "y": 2}});
        let s = to_canonical_string(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": [\n    1,\n    0.123457\n  ],\n  \"b\": 1.500000,\n  \"c\": {\n    \"y\": 2,\n    \"z\": -0.000000\n  }\n}\n"
        );
    }

    #[test]
    fn quantize_is_idempotent() {
        for v in [0.1234565, 1e-9, -3.999_999_5, 123456.789, 0.0] {
            let q = quantize(v);
            assert_eq!(q, quantize(q));
            assert_eq!(format!("{q:.6}"), format!("{v:.6}"));
        }
    }
}
