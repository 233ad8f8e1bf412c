use bch_core::config::{SimConfig, VelocityInit};
use bch_core::grid::Field;
use bch_core::io::Table;
use bch_core::solver::{initial_state, run, CouplingMode, State, Stepper, TimeSeries};

fn coupled_config(mode: CouplingMode, n: usize) -> SimConfig {
    SimConfig { n: Some(n), coupling: mode, init_v: VelocityInit::Bump, ..Default::default() }
}

/// `−K⟨μφ, v_x⟩` evaluated from the fields by spectral differentiation.
fn extra_term(s: &State) -> f64 {
    let p = &s.params;
    let phi = &s.phi;
    let v = s.v.as_ref().unwrap();
    let lap = phi.derivative(2).unwrap();
    let vx = v.derivative(1).unwrap();
    let dx = s.grid().dx();
    let sum: f64 = (0..phi.values().len())
        .map(|i| {
            let f = phi.values()[i];
            let mu = -p.kappa * lap.values()[i] + p.df(f);
            mu * f * vx.values()[i]
        })
        .sum();
    -p.coupling * sum * dx
}

/// Per-interval balance residual and time-averaged extra term over ten
/// intervals of length 1e-3.
fn residual_and_source(c: &SimConfig, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let (state, _) = initial_state(c).unwrap();
    let mut st = Stepper::new(&state, c.stabilizer()).unwrap();
    let span = 1e-3;
    let per = (span / dt).round() as usize;
    let (mut rs, mut ss) = (Vec::new(), Vec::new());
    for _ in 0..10 {
        let l0 = st.diagnostics().lyapunov;
        let mut dissipated = 0.0;
        let mut source = 0.0;
        let mut s_prev = extra_term(&st.state());
        for _ in 0..per {
            let d0 = st.diagnostics().dissipation;
            st.step(dt).unwrap();
            let s_next = extra_term(&st.state());
            dissipated += 0.5 * (d0 + st.diagnostics().dissipation) * dt;
            source += 0.5 * (s_prev + s_next) * dt;
            s_prev = s_next;
        }
        rs.push((st.diagnostics().lyapunov - l0) / span + dissipated / span);
        ss.push(source / span);
    }
    (rs, ss)
}

// The residual carries an O(dt) error much larger than the extra term, so
// both are extrapolated to dt → 0 from three step sizes first.
#[test]
fn div1_balance_residual_tracks_the_extra_term() {
    let c = coupled_config(CouplingMode::Div1, 1024);
    let runs: Vec<_> = [1e-4, 5e-5, 2.5e-5].iter().map(|&dt| residual_and_source(&c, dt)).collect();
    let extrapolate = |k: usize, i: usize| {
        let v = |j: usize| if k == 0 { runs[j].0[i] } else { runs[j].1[i] };
        (8.0 * v(2) - 6.0 * v(1) + v(0)) / 3.0
    };
    let scale = (0..10).map(|i| extrapolate(1, i).abs()).fold(0.0, f64::max);
    assert!(scale > 5e-3, "extra term too small to test: {scale}");
    for i in 0..10 {
        let (r, s) = (extrapolate(0, i), extrapolate(1, i));
        assert!((r - s).abs() < 0.25 * scale, "interval {i}: residual {r} vs extra term {s}");
    }
    // Without extrapolation the raw residual is dominated by the step error.
    assert!(runs[2].0[4] > 2.0 * scale);
}

#[test]
fn advective_and_div2_carry_no_extra_term() {
    for mode in [CouplingMode::Advective, CouplingMode::Div2] {
        let c = coupled_config(mode, 256);
        let (state, _) = initial_state(&c).unwrap();
        let st = Stepper::new(&state, 2.0).unwrap();
        assert_eq!(st.diagnostics().balance_source, 0.0);
    }
}

#[test]
fn identical_configs_give_bit_identical_series() {
    let mut c = coupled_config(CouplingMode::Advective, 512);
    c.t_final = 0.05;
    c.init_v = VelocityInit::Fourier;
    let a = run(&c, None).unwrap();
    let b = run(&c, None).unwrap();
    assert_eq!(a.series.to_table().to_csv_string(), b.series.to_table().to_csv_string());
    c.seed = 1;
    let d = run(&c, None).unwrap();
    assert_ne!(a.series.free_energy, d.series.free_energy);
}

#[test]
fn uncoupled_energy_never_increases_between_records() {
    let c = SimConfig { n: Some(512), t_final: 2.0, ..Default::default() };
    let out = run(&c, None).unwrap();
    for w in out.series.free_energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
    }
    assert!(out.max_lyapunov_increase <= 1e-10);
    assert!(out.resolved());
}

#[test]
fn coupled_lyapunov_never_increases() {
    let mut c = coupled_config(CouplingMode::Advective, 1024);
    c.t_final = 0.2;
    let out = run(&c, None).unwrap();
    assert!(out.max_lyapunov_increase <= 1e-10, "{}", out.max_lyapunov_increase);
    let k = c.params.coupling;
    let l: Vec<f64> = (0..out.series.len())
        .map(|i| out.series.kinetic_energy[i] + k * out.series.free_energy[i])
        .collect();
    assert!(l.windows(2).all(|w| w[1] <= w[0] + 1e-10));
}

#[test]
fn series_csv_round_trip_is_byte_identical() {
    let mut c = coupled_config(CouplingMode::Div2, 256);
    c.t_final = 0.02;
    c.snapshot_times = vec![0.0, 0.02];
    let out = run(&c, None).unwrap();
    let text = out.series.to_table().to_csv_string();
    assert!(text.starts_with("t,free_energy,kinetic_energy,h1_phi,h1_v,period,balance_residual\n"));
    let back = TimeSeries::from_table(&Table::read(text.as_bytes()).unwrap()).unwrap();
    assert_eq!(back.to_table().to_csv_string(), text);

    assert_eq!(out.snapshots.len(), 2);
    let snap = out.snapshots[1].to_table().to_csv_string();
    assert!(snap.starts_with("x,phi,v\n"));
    assert_eq!(Table::read(snap.as_bytes()).unwrap().to_csv_string(), snap);
}

#[test]
fn run_from_file_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = coupled_config(CouplingMode::Advective, 256);
    c.t_final = 0.01;
    c.snapshot_times = vec![0.01];
    let first = run(&c, None).unwrap();
    let path = dir.path().join("start.csv");
    first.snapshots[0].to_table().save(&path).unwrap();

    let text = format!(
        "n = 256\ncoupling = advective\ninit_phi = file\ninit_v = file\ninit_file = {}\nt_final = 0.01\n",
        path.display()
    );
    let c2 = SimConfig::parse(&text).unwrap();
    let (state, init) = initial_state(&c2).unwrap();
    assert_eq!(init.accepted_steps, 0);
    let end = first.final_state;
    for (a, b) in state.phi.values().iter().zip(end.phi.values()) {
        assert_eq!(a, b);
    }
    let v: &Field = state.v.as_ref().unwrap();
    assert_eq!(v.values(), end.v.as_ref().unwrap().values());
    run(&c2, None).unwrap();
}
