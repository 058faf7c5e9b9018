use cpa_contraction::triangulation::{
    build_complex, check_complex, Region, ScalingMatrix, SimplicialComplex,
};
use proptest::prelude::*;

fn complex(n: usize, k: u32, half_width: f64, s: &[f64]) -> SimplicialComplex {
    let region = Region::single(vec![(-half_width, half_width); n]).unwrap();
    build_complex(&region, 1.0, k, &ScalingMatrix::new(s).unwrap()).unwrap()
}

#[test]
fn inverse_norm_scales_like_two_to_the_k() {
    for n in 1..=2 {
        let mut reference = None;
        for k in 0..=4 {
            let c = complex(n, k, 0.5, &vec![1.0; n]);
            let worst = (0..c.num_simplices())
                .map(|i| c.geometry(i).inverse_one_norm)
                .fold(0.0, f64::max);
            let scaled = worst * 0.5f64.powi(k as i32);
            let r = *reference.get_or_insert(scaled);
            assert!((scaled - r).abs() <= 1e-10 * r, "n={n} K={k}: {scaled} vs {r}");
            // bound through the reference constant
            let x_star = c.x_star().unwrap();
            let s_low = c.scaling().unwrap().s_lower();
            assert!(worst <= 2f64.powi(k as i32) / s_low * x_star * (1.0 + 1e-12));
        }
    }
}

#[test]
fn lattice_complexes_are_face_to_face() {
    for n in 1..=2 {
        for k in 0..=3 {
            let c = complex(n, k, 0.3, &vec![1.0; n]);
            let r = check_complex(&c, 300, k as u64);
            assert!(r.is_valid(), "n={n} K={k}: {:?}", r.face_violations.first());
        }
    }
}

#[test]
fn full_cells_carry_factorial_many_simplices() {
    // region aligned with the lattice: every selected cell is complete
    let c = build_complex(
        &Region::single(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap(),
        1.0,
        1,
        &ScalingMatrix::identity(2),
    )
    .unwrap();
    assert_eq!(c.num_simplices(), 2 * 2 * 2 * 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diameters_and_vertex_spacing(
        k in 0u32..4,
        s1 in 0.3f64..2.0,
        s2 in 0.3f64..2.0,
        lo in -1.0f64..0.0,
        width in 0.1f64..1.0,
    ) {
        let region = Region::single(vec![(lo, lo + width), (lo, lo + width)]).unwrap();
        let scaling = ScalingMatrix::new(&[s1, s2]).unwrap();
        let c = build_complex(&region, 2.0, k, &scaling).unwrap();
        let rho = c.rho().unwrap();
        for i in 0..c.num_simplices() {
            prop_assert!(c.geometry(i).h <= scaling.s_star() * rho * (1.0 + 1e-12));
            let slots = c.simplex_slots(i);
            let mut sorted = slots.clone();
            sorted.sort_unstable();
            sorted.dedup();
            // at K = 0 a simplex spans the whole period and may hold both
            // copies of a seam vertex
            if k > 0 {
                prop_assert_eq!(sorted.len(), slots.len());
            }
        }
        let min_gap = rho * scaling.s_lower() / 2.0;
        let nv = c.num_vertices();
        for a in 0..nv {
            for b in a + 1..nv {
                let d = c.vertex(a).iter().zip(c.vertex(b)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(d >= min_gap);
            }
        }
    }
}
