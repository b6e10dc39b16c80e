use expander_cs::tv::*;
use proptest::prelude::*;

fn image() -> impl Strategy<Value = Image2D> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| Image2D::new(r, c, v).unwrap())
    })
}

/// Sum of squared forward differences, written out with explicit indices.
fn tv_oracle(img: &Image2D) -> f64 {
    let mut s = 0.0;
    for i in 0..img.rows() {
        for j in 0..img.cols() {
            if i + 1 < img.rows() {
                s += (img.get(i + 1, j) - img.get(i, j)).powi(2);
            }
            if j + 1 < img.cols() {
                s += (img.get(i, j + 1) - img.get(i, j)).powi(2);
            }
        }
    }
    s.sqrt()
}

#[test]
fn hand_examples() {
    let img: Image2D = "2 2\n0 1\n0 1\n".parse().unwrap();
    assert!((tv_norm(&img) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(tv_norm(&Image2D::new(3, 4, vec![2.5; 12]).unwrap()), 0.0);
    assert_eq!(tv_norm(&Image2D::new(1, 1, vec![7.0]).unwrap()), 0.0);
    assert!((tv_norm_isotropic(&img) - 2.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn matches_oracle(img in image()) {
        prop_assert!((tv_norm(&img) - tv_oracle(&img)).abs() <= 1e-12 * (1.0 + tv_oracle(&img)));
    }

    #[test]
    fn shift_invariant(img in image(), c in -10.0f64..10.0) {
        let base = tv_norm(&img);
        let shifted = tv_norm(&img.map(|v| v + c));
        prop_assert!((shifted - base).abs() <= 1e-12 * base.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn shift_invariant_exactly_on_dyadic_grids(r in 1usize..8, c in 1usize..8, seed in proptest::collection::vec(-512i32..512, 64), shift in -512i32..512) {
        let vals: Vec<f64> = seed.iter().take(r * c).map(|&v| v as f64 / 64.0).chain(std::iter::repeat(0.0)).take(r * c).collect();
        let img = Image2D::new(r, c, vals).unwrap();
        prop_assert_eq!(tv_norm(&img.map(|v| v + shift as f64 / 64.0)), tv_norm(&img));
    }

    #[test]
    fn absolutely_homogeneous(img in image(), a in -100.0f64..100.0) {
        let base = tv_norm(&img);
        let scaled = tv_norm(&img.map(|v| a * v));
        prop_assert!((scaled - a.abs() * base).abs() <= 1e-12 * (a.abs() * base).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn text_round_trip(img in image()) {
        let back: Image2D = img.to_string().parse().unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn global_root_never_exceeds_isotropic(img in image()) {
        prop_assert!(tv_norm(&img) <= tv_norm_isotropic(&img) + 1e-12);
    }
}
