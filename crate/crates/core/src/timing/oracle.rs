//! Register-level simulation of one weight-stationary tile.

#[derive(Clone, Copy)]
struct Psum {
    vector: u64,
    rows_seen: u64,
    value: i64,
}

/// Simulate a `rows x cols` weight-stationary tile cycle by cycle and return
/// the first cycle after the last psum leaves the array.
///
/// Weights load one row per cycle. Input vector `t` enters row `r` at the
/// left edge `r` cycles after row 0 and hops one column per cycle; each unit
/// adds its product to the psum arriving from the unit above. Every psum
/// that leaves is checked against a direct dot product, so a dataflow bug
/// panics instead of producing a plausible count.
pub fn event_oracle(rows: u64, cols: u64, stream: u64) -> u64 {
    assert!(rows >= 1 && cols >= 1 && stream >= 1);
    let (r_n, c_n) = (rows as usize, cols as usize);
    let weight = |r: usize, c: usize| (r * c_n + c + 1) as i64;
    let input = |t: u64, r: usize| (t as i64 + 1) * 3 - r as i64;

    let mut loaded = vec![false; r_n];
    // input register: which vector's element sits in unit (r, c)
    let mut x: Vec<Option<u64>> = vec![None; r_n * c_n];
    let mut ps: Vec<Option<Psum>> = vec![None; r_n * c_n];
    let mut exited = 0u64;
    let expected = stream * cols;
    let mut cycle = 0u64;

    loop {
        if (cycle as usize) < r_n {
            loaded[cycle as usize] = true;
            cycle += 1;
            continue;
        }
        let mut nx = vec![None; r_n * c_n];
        let mut nps: Vec<Option<Psum>> = vec![None; r_n * c_n];
        for r in 0..r_n {
            for c in 0..c_n {
                nx[r * c_n + c] = if c == 0 {
                    let t = cycle as i64 - rows as i64 - r as i64;
                    (t >= 0 && (t as u64) < stream).then_some(t as u64)
                } else {
                    x[r * c_n + c - 1]
                };
            }
        }
        for r in 0..r_n {
            for c in 0..c_n {
                let Some(t) = nx[r * c_n + c] else { continue };
                assert!(loaded[r], "compute before weights");
                let above = if r == 0 {
                    Psum {
                        vector: t,
                        rows_seen: 0,
                        value: 0,
                    }
                } else {
                    ps[(r - 1) * c_n + c].expect("psum arrives with its input")
                };
                assert_eq!(above.vector, t, "skew mismatch at ({r}, {c})");
                nps[r * c_n + c] = Some(Psum {
                    vector: t,
                    rows_seen: above.rows_seen + 1,
                    value: above.value + weight(r, c) * input(t, r),
                });
            }
        }
        for (c, p) in nps[(r_n - 1) * c_n..].iter().enumerate() {
            if let Some(p) = p {
                assert_eq!(p.rows_seen, rows);
                let want: i64 = (0..r_n).map(|r| weight(r, c) * input(p.vector, r)).sum();
                assert_eq!(p.value, want);
                exited += 1;
            }
        }
        x = nx;
        ps = nps;
        cycle += 1;
        if exited == expected {
            return cycle;
        }
    }
}
