mod common;

use common::*;
use magnonics::dispersive;

fn path(f: &tempfile::NamedTempFile) -> &str {
    f.path().to_str().unwrap()
}

#[test]
fn zero_couplings_give_zero_shifts() {
    let text: String = canonical_text()
        .lines()
        .map(|l| {
            if l.starts_with("qubit_coupling") || l.starts_with("magnon_coupling") {
                let key = l.split('=').next().unwrap();
                format!("{key}= \"0 MHz\"")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let f = temp_file(&text);
    let r = report(&["params", "--params", path(&f)]);
    let d = &r["results"]["derived"];
    for key in ["chi_qp", "chi_qm", "probe_pull", "kerr_m", "lamb_shift_m", "lamb_shift_q"] {
        assert!(d[key].as_f64().unwrap().abs() < 1e-9, "{key} = {}", d[key]);
    }
    assert!(d["g_qm"].as_f64().unwrap() < 1e-3);
    assert!((d["dressed_anharmonicity"].as_f64().unwrap() + 137.2).abs() < 1e-9);
}

#[test]
fn missing_key_is_named() {
    let text = canonical_text().replace("magnon_bare_freq = \"7951.50 MHz\"", "");
    let f = temp_file(&text);
    let r = run(&["params", "--params", path(&f)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("magnon_bare_freq"), "{}", r.stderr);
}

#[test]
fn unknown_key_and_missing_unit_are_input_errors() {
    let f = temp_file(&canonical_text().replace("t1 = ", "t2_star = \"0.62 us\"\nt1 = "));
    let r = run(&["params", "--params", path(&f)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("t2_star"), "{}", r.stderr);

    let f = temp_file(&canonical_text().replace("\"9.2 aW\"", "9.2"));
    let r = run(&["params", "--params", path(&f)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("readout_power") && r.stderr.contains("unit"), "{}", r.stderr);
}

#[test]
fn exit_codes_per_class() {
    let p = canonical();
    let p = p.to_str().unwrap();
    assert_eq!(run(&["params", "--params", "/nonexistent/file.toml"]).code, 1);
    assert_eq!(run(&["params"]).code, 1);
    assert_eq!(run(&["fit", "--kind", "bogus", "--data", "x", "--params", p]).code, 1);
    assert_eq!(run(&["params", "--params", p, "--grid", "kerr=0"]).code, 1);
    assert_eq!(run(&["--help"]).code, 0);

    // A transmon pulled far from its bare frequency puts the coupling search
    // outside its bracket: a numerical failure, not an input error.
    let strong = canonical_text().replace("qubit_coupling = \"126.1 MHz\"", "qubit_coupling = \"600 MHz\"");
    let f = temp_file(&strong);
    let r = run(&["params", "--params", path(&f)]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn empty_and_malformed_csv_rejected() {
    let p = canonical();
    let p = p.to_str().unwrap();
    for (content, needle) in [
        ("", "empty"),
        ("current_mA,omega_GHz\n", "no data"),
        ("current_mA,freq\n5,8.4\n", "freq"),
        ("current_mA,omega_GHz\n5,eight\n", "omega_GHz"),
    ] {
        let f = temp_file(content);
        let r = run(&["fit", "--kind", "crossing", "--data", path(&f), "--params", p]);
        assert_eq!(r.code, 1, "{content:?}");
        assert!(r.stderr.contains(needle), "{content:?}: {}", r.stderr);
    }
}

#[test]
fn probe_occupancy_at_readout_power() {
    let r = report(&["occupancy", "--params", canonical().to_str().unwrap()]);
    let n = r["results"]["probe_occupancy"].as_f64().unwrap();
    assert!((n - 0.078).abs() < 1e-3, "{n}");
    let b = &r["results"]["slope_bounds"];
    let s = r["results"]["slope_per_fW"].as_f64().unwrap();
    assert!(b["min"].as_f64().unwrap() < s && s < b["max"].as_f64().unwrap());
}

#[test]
fn kerr_sweep_curve_ordering() {
    let r = run(&[
        "kerr-sweep",
        "--params",
        canonical().to_str().unwrap(),
        "--grid",
        "kerr=0,-0.1,-0.2;omega2=0:0.6:0.05",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = csv_rows(&r.stdout);
    let series = |label: &str| -> Vec<f64> {
        rows.iter().filter(|row| row[2] == label).map(|row| row[1].parse().unwrap()).collect()
    };
    let (k0, k1, k2) = (series("K=0"), series("K=-0.1"), series("K=-0.2"));
    assert_eq!(k0.len(), 13);
    assert_eq!(k0[0], 0.0);
    // At negative detuning a negative Kerr shift pulls the mode toward the
    // drive, so occupancy increases with |K| at low drive.
    for i in 1..k0.len() {
        assert!(k2[i] > k1[i] && k1[i] > k0[i], "Ω² index {i}: {} {} {}", k0[i], k1[i], k2[i]);
    }
}

#[test]
fn undriven_spectrum_is_one_lorentzian() {
    let r = run(&[
        "spectrum",
        "--params",
        canonical().to_str().unwrap(),
        "--fix",
        "nbar_m=0,photon_weight=0",
        "--grid",
        "omega=7986:7997:0.01",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = csv_rows(&r.stdout);
    let gamma = GAMMA_Q;
    let mut count = 0;
    for row in &rows {
        let w = row[0].parse::<f64>().unwrap() * 1e3;
        let v: f64 = row[1].parse().unwrap();
        match row[2].as_str() {
            "total" | "n_m=0" => {
                let lorentz = gamma / std::f64::consts::PI / (gamma * gamma + (w - OMEGA_Q).powi(2));
                assert!((v - lorentz).abs() < 1e-9 * lorentz.max(1e-3), "{w}: {v} vs {lorentz}");
                count += 1;
            }
            _ => assert_eq!(v, 0.0),
        }
    }
    assert_eq!(count, 2 * 1101);
}

#[test]
fn deterministic_reports_with_digests() {
    let p = canonical();
    let args = ["kerr-sweep", "--params", p.to_str().unwrap(), "--grid", "kerr=0,-0.2;omega2=0:1:0.25"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    let r: serde_json::Value = serde_json::from_str(&a.stdout).unwrap();
    let digest = r["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));

    let edited = temp_file(&(canonical_text() + "\n# edited\n"));
    let args = ["kerr-sweep", "--params", path(&edited), "--grid", "kerr=0,-0.2;omega2=0:1:0.25"];
    let c: serde_json::Value = serde_json::from_str(&run(&args).stdout).unwrap();
    assert_ne!(c["inputs"][0]["sha256"], r["inputs"][0]["sha256"]);
    assert_eq!(c["results"], r["results"]);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("params.csv");
    let r = run(&[
        "params",
        "--params",
        canonical().to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("quantity,value_MHz,reference_MHz,deviation_percent\n"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn crossing_map_reproduces_gap() {
    let r = run(&[
        "crossing",
        "--params",
        canonical().to_str().unwrap(),
        "--grid",
        "current=5.5;omega=8400:8510:0.05",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = csv_rows(&r.stdout);
    let pts: Vec<(f64, f64)> =
        rows.iter().map(|row| (row[1].parse::<f64>().unwrap() * 1e3, row[2].parse().unwrap())).collect();
    // Two dips split by 2g on resonance.
    let mut dips: Vec<(f64, f64)> = (1..pts.len() - 1)
        .filter(|&k| pts[k].1 < pts[k - 1].1 && pts[k].1 <= pts[k + 1].1)
        .map(|k| pts[k])
        .collect();
    dips.sort_by(|a, b| a.1.total_cmp(&b.1));
    let gap = (dips[0].0 - dips[1].0).abs();
    assert!((gap - 45.0).abs() < 0.2, "{gap}");
}

#[test]
fn crossing_fit_reports_coupling() {
    let f = temp_file(&crossing_csv(22.5, 0.3, 11));
    let r = report(&["fit", "--kind", "crossing", "--data", path(&f), "--params", canonical().to_str().unwrap()]);
    let g = comparison(&r, "coupling");
    assert!((g - 22.5).abs() < 0.5, "{g}");
    assert_eq!(r["inputs"][1]["role"], "data");
}

#[test]
fn fixed_parameters_flow_through_fit_flag() {
    let f = temp_file(&crossing_csv(22.5, 0.3, 12));
    let p = canonical();
    let r = report(&["fit", "--kind", "crossing", "--data", path(&f), "--params", p.to_str().unwrap(), "--fix", "p4=22.0"]);
    assert_eq!(r["results"]["params"]["p4"].as_f64().unwrap(), 22.0);
    let bad = run(&["fit", "--kind", "crossing", "--data", path(&f), "--params", p.to_str().unwrap(), "--fix", "q=1"]);
    assert_eq!(bad.code, 1);
}

#[test]
fn qubit_magnon_fit_recovers_occupancy_and_probabilities() {
    let truth = magnon_model(1.5, -0.38, 1.06, 0.05, 0.01);
    let f = temp_file(&magnon_spectrum_csv(&truth, 5e-4, 21));
    let r = report(&["fit", "--kind", "qubit-magnon", "--data", path(&f), "--params", canonical().to_str().unwrap()]);
    let res = &r["results"];
    let nbar = res["nbar_m"].as_f64().unwrap();
    let ci = &res["fit"]["ci95"][2];
    assert!((nbar - 1.06).abs() < 0.05, "{nbar}");
    assert!(ci[0].as_f64().unwrap() <= 1.06 && 1.06 <= ci[1].as_f64().unwrap(), "{ci}");

    let expected = dispersive::composite_probabilities(&truth).unwrap().probabilities;
    let bounds = res["probability_bounds"].as_array().unwrap();
    for n in 0..4 {
        let (lo, hi) = (bounds[n][0].as_f64().unwrap(), bounds[n][1].as_f64().unwrap());
        assert!(lo <= expected[n] && expected[n] <= hi, "p_{n} = {} outside [{lo}, {hi}]", expected[n]);
    }
}

#[test]
fn linear_fit_with_zero_intercept() {
    let f = temp_file(&occupancy_csv(0.342, 0.0, 1));
    let p = canonical();
    let r = report(&["fit", "--kind", "linear", "--data", path(&f), "--params", p.to_str().unwrap(), "--fix", "intercept=0"]);
    assert!((r["results"]["slope"].as_f64().unwrap() - 0.342).abs() < 1e-12);
    assert_eq!(r["results"]["intercept"].as_f64().unwrap(), 0.0);
    let bad = run(&["fit", "--kind", "linear", "--data", path(&f), "--params", p.to_str().unwrap(), "--fix", "intercept=1"]);
    assert_eq!(bad.code, 1);
}

#[test]
fn broadening_fit_reads_attowatts() {
    let eta = 0.15; // MHz² per aW
    let mut csv = String::from("p_s_aW,gamma_MHz\n");
    for p in [0.0, 10.0, 19.0, 50.0, 100.0, 190.0] {
        csv += &format!("{p},{}\n", (eta * p + 0.3f64 * 0.3).sqrt());
    }
    let f = temp_file(&csv);
    let r = report(&["fit", "--kind", "broadening", "--data", path(&f), "--params", canonical().to_str().unwrap()]);
    assert!((r["results"]["gamma0"].as_f64().unwrap() - 0.3).abs() < 1e-6);
    assert!((r["results"]["eta"].as_f64().unwrap() - eta * 1e18).abs() < 1e-6 * eta * 1e18);
}

#[test]
fn kerr_fit_on_coarse_grid() {
    // Occupancy from the Kerr model itself at K = -0.2.
    let prop = 0.5; // Ω² per fW
    let mut csv = String::from("p_mw_fW,n_bar,ci\n");
    for k in 1..=10 {
        let p = 0.3 * k as f64;
        let m = magnonics::lindblad::KerrModel::new(-0.38, -0.2, (prop * p).sqrt(), 1.3);
        csv += &format!("{p},{},\n", magnonics::lindblad::steady_state(&m).unwrap().occupancy);
    }
    let f = temp_file(&csv);
    let r = report(&[
        "fit",
        "--kind",
        "kerr",
        "--data",
        path(&f),
        "--params",
        canonical().to_str().unwrap(),
        "--grid",
        "kerr=-0.3:0:0.05;steps=41;samples=21",
    ]);
    assert!((r["results"]["kerr"].as_f64().unwrap() + 0.2).abs() < 1e-9);
    assert!(r["results"]["r_squared"].as_f64().unwrap() > 0.999);
    let b = &r["results"]["kerr_bounds"];
    assert!(b[0].as_f64().unwrap() <= -0.2 && -0.2 <= b[1].as_f64().unwrap());
}
