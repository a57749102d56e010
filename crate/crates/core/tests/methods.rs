use std::f64::consts::PI;

use parafermion_otoc::ed::{ExactDynamics, DEFAULT_SPIN_CAP};
use parafermion_otoc::model::{AlternatingModelParams, HoppingModelParams, ModelParams};
use parafermion_otoc::otoc::{run, Method, OtocRequest, TimeGrid};

fn hopping(n: usize) -> ModelParams {
    ModelParams::Hopping(HoppingModelParams::new(0.5, PI / 6.0, PI / 4.0, n))
}

fn last_error(model: &ModelParams, j: usize, k: usize, dt: f64, method: Method) -> f64 {
    let grid = TimeGrid::new(2.0, dt, 1.0).unwrap();
    let mpo = run(&OtocRequest::new(model.clone(), j, k, grid, 256, method)).unwrap();
    let ed = ExactDynamics::from_params(model, DEFAULT_SPIN_CAP).unwrap().otoc(j, k, &[2.0]).unwrap();
    (mpo.f.last().unwrap() - ed[0]).norm()
}

#[test]
fn trotter_error_is_second_order() {
    let model = hopping(3);
    for method in [Method::DirectMpo, Method::TimeSplitMpo] {
        let coarse = last_error(&model, 2, 5, 0.05, method);
        let fine = last_error(&model, 2, 5, 0.025, method);
        let ratio = coarse / fine;
        assert!((3.5..4.5).contains(&ratio), "{method}: {coarse:.3e} / {fine:.3e} = {ratio:.2}");
    }
}

#[test]
fn methods_agree_before_truncation() {
    let model = ModelParams::Alternating(AlternatingModelParams::new(0.5, -PI / 6.0, 4));
    let grid = TimeGrid::new(1.0, 0.005, 0.5).unwrap();
    for (j, k) in [(1, 8), (6, 3)] {
        let a = run(&OtocRequest::new(model.clone(), j, k, grid, 256, Method::DirectMpo)).unwrap();
        let b = run(&OtocRequest::new(model.clone(), j, k, grid, 256, Method::TimeSplitMpo)).unwrap();
        assert_eq!(a.truncation.last().unwrap().cumulative, 0.0);
        for (x, y) in a.f.iter().zip(&b.f) {
            assert!((x - y).norm() < 1e-4, "({j},{k}): {x} vs {y}");
        }
    }
}

#[test]
fn otoc_is_invariant_under_shift_of_the_time_origin() {
    let model = hopping(3);
    let ed = ExactDynamics::from_params(&model, DEFAULT_SPIN_CAP).unwrap();
    let geom = ed.geometry();
    let a = ed.operator(&parafermion_otoc::algebra::parafermion(4, geom).unwrap()).unwrap();
    let b = ed.operator(&parafermion_otoc::algebra::parafermion(1, geom).unwrap()).unwrap();
    for (t, s) in [(0.7, 0.3), (1.9, -1.1), (2.5, 2.5)] {
        let shifted = ed.four_point(&a, t + s, &b, s);
        let origin = ed.four_point(&a, t, &b, 0.0);
        assert!((shifted - origin).norm() < 1e-10, "t={t} s={s}");
    }
}

#[test]
fn parity_insertion_leaves_distinct_pairs_unchanged() {
    let ed = ExactDynamics::from_params(&hopping(3), DEFAULT_SPIN_CAP).unwrap();
    let times = [0.25, 1.3, 3.7];
    for j in 1..=6 {
        for k in (1..=6).filter(|&k| k != j) {
            let f = ed.otoc(j, k, &times).unwrap();
            let g = ed.parity_inserted(j, k, &times).unwrap();
            for (x, y) in f.iter().zip(&g) {
                assert!((x - y).norm() < 1e-10, "({j},{k})");
            }
        }
    }
}
