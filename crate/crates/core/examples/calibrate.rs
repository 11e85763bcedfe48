//! Scratch calibration runs (not shipped): level-normalized
//! finite-difference constant, golden-window verification, certificate
//! cube counts, and covering timings.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use whitney_core::{
    check_covering, check_distance_certificates, phi_eval, CPoint, Decomposition, Dyadic,
    PhiKind, SetPart, SetSpec, TotalClosedSet,
};

fn two_point() -> TotalClosedSet {
    TotalClosedSet::make_set(SetSpec {
        dim: 1,
        parts: vec![
            SetPart::Point { coords: vec![Dyadic::zero()] },
            SetPart::Point { coords: vec![Dyadic::one()] },
        ],
    })
    .unwrap()
}

fn unit_ball() -> TotalClosedSet {
    TotalClosedSet::make_set(SetSpec {
        dim: 2,
        parts: vec![SetPart::Ball {
            center: vec![Dyadic::zero(), Dyadic::zero()],
            radius: Ratio::from_integer(BigInt::from(1)),
        }],
    })
    .unwrap()
}

fn unit_box() -> TotalClosedSet {
    TotalClosedSet::make_set(SetSpec {
        dim: 2,
        parts: vec![SetPart::Box {
            min: vec![Dyadic::zero(), Dyadic::zero()],
            max: vec![Dyadic::one(), Dyadic::one()],
        }],
    })
    .unwrap()
}

fn origin() -> TotalClosedSet {
    TotalClosedSet::make_set(SetSpec {
        dim: 1,
        parts: vec![SetPart::Point { coords: vec![Dyadic::zero()] }],
    })
    .unwrap()
}

fn main() {
    // --- golden window for the origin set -----------------------------------
    let dec0 = Decomposition::new(origin());
    let lo = vec![Dyadic::from_int(-64)];
    let hi = vec![Dyadic::from_int(64)];
    let cubes = dec0.enum_region(&lo, &hi, -8, 6).unwrap();
    println!("golden window: {} cubes", cubes.len());
    let mut tags: Vec<(i64, i64)> = cubes.iter().map(|q| (q.level, q.corner[0])).collect();
    tags.sort();
    println!("{tags:?}");

    // --- certificate cube counts --------------------------------------------
    let specs: Vec<(&str, Decomposition, Vec<i64>, Vec<i64>, i64, i64)> = vec![
        ("origin", dec0, vec![-4], vec![4], -2, 6),
        ("two-point", Decomposition::new(two_point()), vec![-2], vec![3], -2, 6),
        ("unit-ball", Decomposition::new(unit_ball()), vec![-3, -3], vec![3, 3], -2, 3),
        ("unit-box", Decomposition::new(unit_box()), vec![-2, -2], vec![3, 3], -2, 3),
    ];
    let mut total = 0;
    for (name, dec, bl, bh, kmin, kmax) in &specs {
        let bl: Vec<Dyadic> = bl.iter().map(|&v| Dyadic::from_int(v)).collect();
        let bh: Vec<Dyadic> = bh.iter().map(|&v| Dyadic::from_int(v)).collect();
        let t = Instant::now();
        let r = check_distance_certificates(dec, &bl, &bh, *kmin, *kmax, 1);
        println!("{name}: {} in {:?} [{}]", r.samples, t.elapsed(), r.line());
        total += r.samples;
    }
    println!("total certificate cubes: {total}\n");

    // --- covering timing on the ball ----------------------------------------
    let t = Instant::now();
    let r = check_covering(&specs[2].1, 21, 200);
    println!("covering ball 200: {:?} [{}]", t.elapsed(), r.line());

    // --- level-normalized finite-difference constant -------------------------
    let dec = Decomposition::new(two_point());
    let h = Dyadic::pow2(-10);
    let two_h = Dyadic::pow2(-9);
    let i = 30i64;
    let mut worst_c0 = Dyadic::zero();
    let mut worst_abs = Dyadic::zero();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..240 {
        let num = rng.gen_range(-4096i64..8192);
        let x = Dyadic::int_times_pow2(num, -12);
        if x.signum() == 0 || x == Dyadic::one() {
            continue;
        }
        let xp = CPoint::from_dyadics(vec![x.clone()]);
        let gx = match dec.enum_gx(&xp, 64) {
            Ok(g) => g,
            Err(_) => continue,
        };
        for q in gx.cubes.iter().take(4) {
            let plus = CPoint::from_dyadics(vec![x.add(&h)]);
            let minus = CPoint::from_dyadics(vec![x.sub(&h)]);
            let fp = phi_eval(&dec, q, PhiKind::PhiStar, &plus, &[0], i).unwrap();
            let fm = phi_eval(&dec, q, PhiKind::PhiStar, &minus, &[0], i).unwrap();
            let cd = fp.sub(&fm).div(&two_h, 40, whitney_core::Round::Nearest);
            let dv = phi_eval(&dec, q, PhiKind::PhiStar, &xp, &[1], i).unwrap();
            let ratio = cd.sub(&dv).abs().shl(20);
            // normalize by (16 * 2^level)^3
            let c0 = ratio.div(
                &Dyadic::int_times_pow2(1, 4 + q.level).pow(3),
                20,
                whitney_core::Round::Up,
            );
            if c0 > worst_c0 {
                worst_c0 = c0.clone();
            }
            if ratio > worst_abs {
                worst_abs = ratio.clone();
            }
        }
    }
    println!(
        "fd: worst C0 = {}  worst |cd-d|/h^2 = {}",
        worst_c0.to_decimal_string(),
        worst_abs.to_decimal_string()
    );
}
