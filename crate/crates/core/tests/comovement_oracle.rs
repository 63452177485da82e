use comove::cmx::{read_cmx, write_cmx};
use comove::comovement::{comovement_matrix, Sign, SignMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_signs(rng: &mut ChaCha8Rng, n: usize, t: usize) -> SignMatrix {
    let p_unassigned = rng.gen_range(0.0..0.5);
    let signs = (0..n * t)
        .map(|_| {
            if rng.gen_bool(p_unassigned) {
                Sign::Unassigned
            } else if rng.gen_bool(0.5) {
                Sign::Plus
            } else {
                Sign::Minus
            }
        })
        .collect();
    SignMatrix::new(
        (0..n).map(|i| format!("X{i}")).collect(),
        (0..t).map(|w| format!("w{w}")).collect(),
        signs,
    )
    .unwrap()
}

/// Straight double loop over pairs and windows.
fn recount(s: &SignMatrix, i: usize, j: usize) -> (u32, u32) {
    let (mut same, mut both) = (0, 0);
    for w in 0..s.n_windows() {
        let (a, b) = (s.get(i, w), s.get(j, w));
        if a.is_assigned() && b.is_assigned() {
            both += 1;
            if a == b {
                same += 1;
            }
        }
    }
    (same, both)
}

#[test]
fn packed_kernel_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=8);
        let t = rng.gen_range(1..=50);
        let s = random_signs(&mut rng, n, t);
        let m = comovement_matrix(&s);
        assert_eq!(m.n_windows() as usize, t);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!((m.count(i, j), m.co_assigned(i, j)), recount(&s, i, j));
                }
            }
        }
    }
}

#[test]
fn word_boundaries() {
    // windows straddling 64-bit word edges
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for t in [63, 64, 65, 127, 128, 129, 522] {
        let s = random_signs(&mut rng, 5, t);
        let m = comovement_matrix(&s);
        for (i, j, c) in m.pairs() {
            assert_eq!((c, m.co_assigned(i, j)), recount(&s, i, j), "T={t}");
        }
    }
}

#[test]
fn identical_rows_hit_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_signs(&mut rng, 1, 200);
    let mut signs = base.row(0).to_vec();
    signs.extend_from_slice(base.row(0));
    signs.extend(random_signs(&mut rng, 1, 200).row(0));
    let s = SignMatrix::new(
        vec!["A".into(), "A2".into(), "B".into()],
        (0..200).map(|w| w.to_string()).collect(),
        signs,
    )
    .unwrap();
    let m = comovement_matrix(&s);
    assert_eq!(m.count(0, 1), m.co_assigned(0, 1));
    assert!(m.pairs().all(|(_, _, c)| c <= m.count(0, 1)));
}

#[test]
fn symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_signs(&mut rng, 30, 300);
    let m = comovement_matrix(&s);
    for i in 0..30 {
        for j in 0..30 {
            assert_eq!(m.count(i, j), m.count(j, i));
            assert!(m.count(i, j) <= m.co_assigned(i, j));
            assert!(m.co_assigned(i, j) <= 300);
        }
    }
    let mut buf = Vec::new();
    write_cmx(&m, &mut buf).unwrap();
    assert_eq!(read_cmx(buf.as_slice()).unwrap(), m);
}
