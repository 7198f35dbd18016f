//! Coefficient expressions: parse, evaluate and round-trip through JSON.

#![no_main]

use libfuzzer_sys::fuzz_target;

use gradcap::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(value) = serde_json::from_slice::<serde_json::Value>(data) else { return };
    let Ok(expr) = Expr::from_json(&value) else { return };
    let _ = expr.eval(&[0.25, -0.5]);
    let _ = expr.eval_xz(&[0.1, 0.2], &[0.3, -0.4]);
    assert_eq!(Expr::from_json(&expr.to_json()).as_ref(), Ok(&expr));
});
