//! Number formatting shared by the CSV writers.

/// Shortest decimal that round-trips to the same `f64`: positional notation
/// for `1e-4 ≤ |x| < 1e15`, scientific otherwise.
pub fn number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Empty string for absent values.
pub fn optional(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}
