//! Number formatting, config hashing and CSV assembly.

use serde_json::Value;
use sha2::{Digest, Sha256};

/// `x` rounded to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// `x` with 9 significant digits, in plain decimal notation.
pub fn fmt9(x: f64) -> String {
    let r = round9(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

/// Rounds every float in a JSON value to 9 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().map(round9).and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&round_json(v)).expect("JSON values serialize");
    s.push('\n');
    s
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config_hash: &str, seed: u64, header: &[&str]) -> Self {
        Csv { text: format!("# config_sha256={config_hash} seed={seed}\n{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(fmt9(1.1366188185143908), "1.13661882");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(123456789012.0), "123456789000");
        assert_eq!(fmt9(-0.000123456789123), "-0.000123456789");
        let v = round_json(serde_json::json!({"a": [0.1234567890123, 3], "b": "x"}));
        assert_eq!(v.to_string(), r#"{"a":[0.123456789,3],"b":"x"}"#);
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
