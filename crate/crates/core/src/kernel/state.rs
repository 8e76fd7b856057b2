use std::fmt;
use std::sync::Arc;

use xxhash_rust::xxh3::Xxh3;

use super::text::write_value;
use super::value::Value;

/// An assignment of values to variables. Bindings are kept sorted by
/// variable name, so equality and hashing ignore construction order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    bindings: Vec<(Arc<str>, Value)>,
}

impl State {
    pub fn from_bindings<K: AsRef<str>>(bindings: impl IntoIterator<Item = (K, Value)>) -> State {
        let mut b: Vec<(Arc<str>, Value)> =
            bindings.into_iter().map(|(k, v)| (Arc::from(k.as_ref()), v)).collect();
        b.sort_by(|x, y| x.0.cmp(&y.0));
        b.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 = later.1.clone();
                true
            } else {
                false
            }
        });
        State { bindings: b }
    }

    /// Builds a state from values ordered like `sorted_names`, which must
    /// be strictly increasing.
    pub(crate) fn from_slots(sorted_names: &[Arc<str>], values: Vec<Value>) -> State {
        debug_assert_eq!(sorted_names.len(), values.len());
        State { bindings: sorted_names.iter().cloned().zip(values).collect() }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings
            .binary_search_by(|(k, _)| k.as_ref().cmp(name))
            .ok()
            .map(|i| &self.bindings[i].1)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.iter().map(|(k, _)| k.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.bindings.iter().map(|(k, v)| (k.as_ref(), v))
    }

    pub(crate) fn slot(&self, i: usize) -> &Value {
        &self.bindings[i].1
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// The state as a record from variable-name strings to values.
    pub fn to_record(&self) -> Value {
        Value::record(self.iter().map(|(n, v)| (n, v.clone())))
    }

    /// Canonical serialization: `name=value;` per binding in name order.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.bindings {
            s.push_str(k);
            s.push('=');
            write_value(&mut s, v).expect("String write");
            s.push(';');
        }
        s
    }

    /// Whether the binding set equals `vars` exactly.
    pub fn binds_exactly<S: AsRef<str>>(&self, vars: &[S]) -> bool {
        let mut want: Vec<&str> = vars.iter().map(|s| s.as_ref()).collect();
        want.sort_unstable();
        want.dedup();
        want.len() == self.bindings.len() && want.iter().zip(self.names()).all(|(a, b)| *a == b)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(" /\\ ")?;
            }
            write!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// 64-bit digest standing in for a state in the seen-set.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::str::FromStr for Fingerprint {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Fingerprint)
    }
}

struct HashWriter<'a>(&'a mut Xxh3);

impl fmt::Write for HashWriter<'_> {
    fn write_str(&mut self, s: &str) -> fmt::Result {
        self.0.update(s.as_bytes());
        Ok(())
    }
}

/// Seeded XXH3 over the canonical serialization, streamed without an
/// intermediate buffer.
pub fn fingerprint_state(s: &State, seed: u64) -> Fingerprint {
    let mut h = Xxh3::with_seed(seed);
    {
        let mut w = HashWriter(&mut h);
        for (k, v) in &s.bindings {
            fmt::Write::write_str(&mut w, k).expect("hash write");
            fmt::Write::write_char(&mut w, '=').expect("hash write");
            write_value(&mut w, v).expect("hash write");
            fmt::Write::write_char(&mut w, ';').expect("hash write");
        }
    }
    Fingerprint(h.digest())
}

/// Birthday-bound estimate of the probability that two of `distinct`
/// states share a 64-bit fingerprint.
pub fn collision_probability(distinct: u64) -> f64 {
    if distinct < 2 {
        return 0.0;
    }
    let d = distinct as f64;
    let pairs = d * (d - 1.0) / 2.0;
    (pairs / 2f64.powi(64)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use xxhash_rust::xxh3::xxh3_64_with_seed;

    fn st(x: i64, y: &str) -> State {
        State::from_bindings([("x", Value::int(x)), ("y", Value::str(y))])
    }

    #[test]
    fn fingerprint_is_deterministic_and_order_independent() {
        let a = st(1, "q");
        let b = State::from_bindings([("y", Value::str("q")), ("x", Value::int(1))]);
        assert_eq!(a, b);
        assert_eq!(fingerprint_state(&a, 7), fingerprint_state(&a, 7));
        assert_eq!(fingerprint_state(&a, 7), fingerprint_state(&b, 7));
        assert_ne!(fingerprint_state(&a, 7), fingerprint_state(&a, 8));
    }

    #[test]
    fn streamed_digest_matches_canonical_text_digest() {
        let a = st(-4, "\"x\"");
        assert_eq!(fingerprint_state(&a, 3).0, xxh3_64_with_seed(a.canonical_text().as_bytes(), 3));
    }

    #[test]
    fn collision_probability_edges() {
        assert_eq!(collision_probability(0), 0.0);
        assert_eq!(collision_probability(1), 0.0);
        let two = collision_probability(2);
        assert!((two - 1.0 / 2f64.powi(64)).abs() < 1e-30);
        // 2^33 (2^33 - 1) / 2 is about 2^65, twice the denominator
        assert_eq!(collision_probability(1 << 33), 1.0);
        let big = collision_probability(1 << 32);
        assert!((big - 0.5).abs() < 1e-9);
    }

    #[test]
    fn binds_exactly_detects_extras_and_omissions() {
        let s = st(0, "a");
        assert!(s.binds_exactly(&["y", "x"]));
        assert!(!s.binds_exactly(&["x"]));
        assert!(!s.binds_exactly(&["x", "y", "z"]));
    }
}
