#![no_main]

use std::sync::{Arc, OnceLock};

use libfuzzer_sys::fuzz_target;

use gradcap::geometry::{build_grid, Domain, Grid};
use gradcap::io::{read_field_csv, write_field_csv};

// Small 2D grid so that valid inputs are reachable.
fn grid() -> Arc<Grid> {
    static GRID: OnceLock<Arc<Grid>> = OnceLock::new();
    GRID.get_or_init(|| Arc::new(build_grid(&Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap(), 0.5).unwrap()))
        .clone()
}

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let grid = grid();
    if let Ok(field) = read_field_csv(&text, grid.clone()) {
        let n = grid.n_interior();
        let out = write_field_csv(&field, &vec![0.0; n], &vec![0.0; n], &[]).unwrap();
        let back = read_field_csv(&out, grid).unwrap();
        assert_eq!(field, back);
    }
});
