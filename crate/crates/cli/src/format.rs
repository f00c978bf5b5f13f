/// `x` to `digits` significant digits: fixed notation for magnitudes in
/// [1e-4, 1e6), scientific otherwise.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new leading digit, e.g. 9.9996 -> 10.000
        let carried = s
            .parse::<f64>()
            .is_ok_and(|r| r.abs() >= 10f64.powi(exp + 1));
        if carried && decimals > 0 {
            let decimals = decimals - 1;
            return format!("{x:.decimals$}");
        }
        s
    } else {
        format!("{x:.*e}", digits - 1)
    }
}
