//! JSON helpers for values that may be infinite. Non-finite numbers are
//! written as the strings `"inf"`, `"-inf"` and `"nan"`.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

fn to_repr(v: f64) -> Repr {
    if v.is_finite() {
        Repr::Num(v)
    } else if v.is_nan() {
        Repr::Text("nan".into())
    } else if v > 0.0 {
        Repr::Text("inf".into())
    } else {
        Repr::Text("-inf".into())
    }
}

fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => match s.as_str() {
            "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
            "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
            "nan" | "NaN" => Ok(f64::NAN),
            other => Err(E::custom(format!("expected a number, found {other:?}"))),
        },
    }
}

pub mod ext_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

pub mod ext_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(from_repr)
            .collect()
    }
}

/// Rounds every number in a JSON tree to `digits` significant digits.
pub fn round_json(v: &mut serde_json::Value, digits: usize) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    let r = round_sig(f, digits);
                    if let Some(m) = serde_json::Number::from_f64(r) {
                        *n = m;
                    }
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(|x| round_json(x, digits)),
        serde_json::Value::Object(o) => o.values_mut().for_each(|x| round_json(x, digits)),
        _ => {}
    }
}

pub fn round_sig(f: f64, digits: usize) -> f64 {
    if !f.is_finite() || f == 0.0 {
        return f;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), f);
    let r: f64 = s.parse().unwrap_or(f);
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "ext_vec")]
        v: Vec<f64>,
    }

    #[test]
    fn infinities_round_trip() {
        let h = Holder {
            v: vec![1.5, f64::INFINITY, f64::NEG_INFINITY],
        };
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"v":[1.5,"inf","-inf"]}"#);
        assert_eq!(serde_json::from_str::<Holder>(&s).unwrap(), h);
    }

    #[test]
    fn rounding_to_twelve_digits() {
        assert_eq!(round_sig(0.39999999999999997, 12), 0.4);
        assert_eq!(round_sig(1.3000000000000003, 12), 1.3);
        assert_eq!(round_sig(-2.0, 12), -2.0);
        assert_eq!(round_sig(-1e-17, 12), -1e-17);
    }
}
