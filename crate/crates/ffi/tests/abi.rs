use std::ffi::CStr;
use std::ptr;

use mho_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mho_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn closed_form_functions() {
    unsafe {
        let mut n = 0usize;
        assert_eq!(mho_ell(20, 0.002, 0.0005, &mut n), MhoStatus::Ok);
        assert_eq!(n, 6);
        assert_eq!(mho_ell(20, 0.0, 0.0005, &mut n), MhoStatus::InvalidArgument);
        assert!(last_error().contains("tau"));

        let mut t = MhoContractionTerms { e: 0.0, d: 0.0, k: 0.0 };
        assert_eq!(mho_contraction_terms(1.2, 0.6, 1.0, &mut t), MhoStatus::Ok);
        assert!((t.e - 0.5).abs() < 1e-12 && (t.d - 1.2).abs() < 1e-12 && (t.k - 0.6).abs() < 1e-12);
        assert_eq!(
            mho_contraction_terms(1.2, -1.0, 1.0, &mut t),
            MhoStatus::InvalidArgument
        );

        let mut v = 0.0;
        assert_eq!(mho_alpha_estimate(1.2, 1.0, 20, &mut v), MhoStatus::Ok);
        assert!((v - 0.01).abs() < 1e-12);
        assert_eq!(mho_efficiency_gradient(0.58, 0.60, 1.2, &mut v), MhoStatus::Ok);
        assert!((v + 0.02 / 1.2).abs() < 1e-12);
        assert_eq!(mho_gain_gradient(0.5, 1.2, -0.02 / 1.2, 0.01, &mut v), MhoStatus::Ok);
        assert!((v + 0.015).abs() < 1e-12);
        assert_eq!(mho_response_time_gradient(0.6, 20, -0.015, &mut v), MhoStatus::Ok);
        assert!((v - 0.04139).abs() < 1e-4);
        assert_eq!(
            mho_response_time_gradient(1.0, 20, 0.1, &mut v),
            MhoStatus::InvalidArgument
        );
        assert_eq!(
            mho_gain_gradient(1.0, 1.0, 0.0, 0.0, ptr::null_mut()),
            MhoStatus::NullPointer
        );
    }
}

#[test]
fn rate_adapter_handle() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(mho_rate_adapter_new(20, 20, 1000, 10, &mut h), MhoStatus::Ok);
        let mut q = 0;
        assert_eq!(mho_rate_adapter_q(h, &mut q), MhoStatus::Ok);
        assert_eq!(q, 20);
        // K = 1.2 * 1.5 > 1 with the gain rising in q: budget goes down, clamped
        assert_eq!(mho_rate_adapter_update(h, 1.2, 1.0, 1.0, 0.8, &mut q), MhoStatus::Ok);
        assert_eq!(q, 20);
        // contracting step: the response-time branch decides, q stays in bounds
        assert_eq!(mho_rate_adapter_update(h, 1.0, 0.1, 0.2, 1.0, &mut q), MhoStatus::Ok);
        let mut again = 0;
        mho_rate_adapter_q(h, &mut again);
        assert_eq!(q, again);
        assert!((20..=1000).contains(&q));
        let mut k = 0.0;
        assert_eq!(mho_rate_adapter_last_gain(h, &mut k), MhoStatus::Ok);
        assert!((k - 0.1).abs() < 1e-12);
        assert_eq!(
            mho_rate_adapter_update(h, 0.0, 0.1, 0.2, 1.0, &mut q),
            MhoStatus::InvalidArgument
        );
        mho_rate_adapter_free(h);

        assert_eq!(mho_rate_adapter_new(5, 1, 10, 1, &mut h), MhoStatus::InvalidArgument);
        assert_eq!(mho_rate_adapter_q(ptr::null(), &mut q), MhoStatus::NullPointer);
        mho_rate_adapter_free(ptr::null_mut());
    }
}

fn vdp_rhs(x: [f64; 3], u: f64, a: f64) -> [f64; 3] {
    [x[1], -a * x[0] + (1.0 - u * x[2] * x[0] * x[0]) * x[1], 0.0]
}

fn rk4(x: [f64; 3], u: f64, a: f64, dt: f64) -> [f64; 3] {
    let add = |x: [f64; 3], k: [f64; 3], s: f64| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
    let k1 = vdp_rhs(x, u, a);
    let k2 = vdp_rhs(add(x, k1, dt / 2.0), u, a);
    let k3 = vdp_rhs(add(x, k2, dt / 2.0), u, a);
    let k4 = vdp_rhs(add(x, k3, dt), u, a);
    [0, 1, 2].map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[test]
fn observer_tracks_noiseless_plant() {
    unsafe {
        let mut cfg = std::mem::zeroed::<MhoVdpObserverConfig>();
        assert_eq!(mho_vdp_observer_config_default(&mut cfg), MhoStatus::Ok);
        cfg.horizon = 50;
        let guess = [2.0, 0.5, 1.5];
        let mut h = ptr::null_mut();
        assert_eq!(mho_vdp_observer_new(&cfg, guess.as_ptr(), &mut h), MhoStatus::Ok);

        let mut cost = 0.0;
        assert_eq!(mho_vdp_observer_cost(h, &mut cost), MhoStatus::WindowUnderflow);
        let mut est = [0.0; 3];
        assert_eq!(
            mho_vdp_observer_estimate(h, est.as_mut_ptr()),
            MhoStatus::WindowUnderflow
        );

        let mut x = [3.0, 1.0, 1.0];
        let mut err = f64::INFINITY;
        for k in 0..1500 {
            let u = 1.0 - 0.5 * (2.0 * k as f64 * cfg.tau).cos();
            assert_eq!(
                mho_vdp_observer_push(h, x[0], u, est.as_mut_ptr()),
                MhoStatus::Ok,
                "{}",
                last_error()
            );
            err = (0..3).map(|i| (est[i] - x[i]).abs()).fold(0.0, f64::max);
            x = rk4(x, u, 10.0, cfg.tau);
        }
        assert!(err < 1e-2, "final error {err}");
        assert_eq!(mho_vdp_observer_cost(h, &mut cost), MhoStatus::Ok);
        assert!(cost >= cfg.floor_c && cost < 1e-3, "{cost}");
        let mut q = 0;
        assert_eq!(mho_vdp_observer_q(h, &mut q), MhoStatus::Ok);
        assert!((cfg.q_min..=cfg.q_max).contains(&q));
        let mut again = [0.0; 3];
        assert_eq!(mho_vdp_observer_estimate(h, again.as_mut_ptr()), MhoStatus::Ok);
        assert_eq!(again, est);
        mho_vdp_observer_free(h);
    }
}

#[test]
fn observer_rejects_bad_input() {
    unsafe {
        let mut cfg = std::mem::zeroed::<MhoVdpObserverConfig>();
        mho_vdp_observer_config_default(&mut cfg);
        let guess = [1.0, 1.0, 1.0];
        let mut h = ptr::null_mut();
        assert_eq!(
            mho_vdp_observer_new(ptr::null(), guess.as_ptr(), &mut h),
            MhoStatus::NullPointer
        );
        let mut bad = cfg;
        bad.q_min = 1;
        assert_eq!(
            mho_vdp_observer_new(&bad, guess.as_ptr(), &mut h),
            MhoStatus::InvalidArgument
        );
        let mut bad = cfg;
        bad.box_lower[0] = 20.0;
        assert_eq!(
            mho_vdp_observer_new(&bad, guess.as_ptr(), &mut h),
            MhoStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());

        assert_eq!(mho_vdp_observer_new(&cfg, guess.as_ptr(), &mut h), MhoStatus::Ok);
        assert_eq!(
            mho_vdp_observer_push(h, f64::NAN, 1.0, ptr::null_mut()),
            MhoStatus::InvalidArgument
        );
        assert_eq!(mho_vdp_observer_push(h, 1.0, 1.0, ptr::null_mut()), MhoStatus::Ok);
        assert_eq!(
            mho_vdp_observer_push(ptr::null_mut(), 1.0, 1.0, ptr::null_mut()),
            MhoStatus::NullPointer
        );
        mho_vdp_observer_free(h);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(mho_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
