use std::path::Path;
use std::process::Command;

use eaglass::experiment::split_header;

fn eaglass(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_eaglass"))
        .args(args)
        .output()
        .unwrap()
}

fn body(path: &Path) -> String {
    split_header(&std::fs::read_to_string(path).unwrap()).1
}

const SMALL: &[(&str, &[&str])] = &[
    ("gs", &["--set", "size=5", "--set", "instances=4"]),
    ("excite", &["--set", "size=4", "--set", "instances=2"]),
    (
        "scan-edge",
        &[
            "--set",
            "size=4",
            "--set",
            "edge=[0,0,1]",
            "--set",
            "epsilons=[0.1]",
            "--set",
            "instances=3",
        ],
    ),
    (
        "fluct",
        &[
            "--set",
            "size=6",
            "--set",
            "window=2",
            "--set",
            "probe_edge=[0,0,1]",
            "--set",
            "samples=30",
        ],
    ),
    (
        "martingale",
        &[
            "--set",
            "size=5",
            "--set",
            "window=2",
            "--set",
            "block=1",
            "--set",
            "n_outer=6",
            "--set",
            "n_inner=4",
        ],
    ),
    (
        "variance",
        &["--set", "window_sizes=[2,3]", "--set", "samples=20"],
    ),
    (
        "mgf",
        &[
            "--set",
            "size=6",
            "--set",
            "window=2",
            "--set",
            "samples=30",
            "--set",
            "bootstrap=50",
        ],
    ),
    (
        "weights",
        &[
            "--set",
            "window=2",
            "--set",
            "sizes=[4,5]",
            "--set",
            "samples=20",
        ],
    ),
    ("check", &["--set", "check_instances=5"]),
];

#[test]
fn every_subcommand_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (name, extra) in SMALL {
        let mut outputs = Vec::new();
        for workers in ["1", "3"] {
            let out = dir.path().join(format!("{name}-{workers}"));
            let mut args = vec![
                *name,
                "--seed",
                "17",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ];
            args.extend_from_slice(extra);
            let res = eaglass(&args);
            assert!(
                res.status.success(),
                "{name}: {}",
                String::from_utf8_lossy(&res.stderr)
            );
            let mut files: Vec<_> = std::fs::read_dir(&out)
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            assert!(!files.is_empty());
            outputs.push(
                files
                    .iter()
                    .map(|f| (f.file_name().unwrap().to_owned(), body(f)))
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(outputs[0], outputs[1], "{name}");
    }
}

#[test]
fn headers_carry_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = eaglass(&[
        "gs",
        "--seed",
        "5",
        "--solver",
        "dp",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "size=4",
    ]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(out.join("gs.csv")).unwrap();
    let (header, body) = split_header(&text);
    assert!(header[0].starts_with("run_id: "));
    assert!(header.contains(&"experiment = \"gs\""));
    assert!(header.contains(&"seed = 5"));
    assert!(header.contains(&"solver = \"dp\""));
    assert!(body.starts_with("instance,energy,magnetization,spins\n"));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"gs\"\nsize = 4\ninstances = 2\n").unwrap();
    let out = dir.path().join("o");
    let res = eaglass(&[
        "gs",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert_eq!(body(&out.join("gs.csv")).lines().count(), 3);
    // config written for another experiment
    let res = eaglass(&[
        "fluct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn couplings_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("j.txt");
    let mut text = String::new();
    // 3x3 ferromagnet, every edge listed once
    for r in 0..3 {
        for c in 0..3 {
            text.push_str(&format!("{r} {c} {} {c} 1.0\n", (r + 1) % 3));
            text.push_str(&format!("{r} {c} {r} {} 1.0\n", (c + 1) % 3));
        }
    }
    std::fs::write(&file, text).unwrap();
    let out = dir.path().join("o");
    let res = eaglass(&[
        "gs",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "size=3",
        "--set",
        &format!("couplings_file=\"{}\"", file.display()),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(
        body(&out.join("gs.csv")),
        "instance,energy,magnetization,spins\n0,-18,9,+++++++++\n"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(
        eaglass(&["gs", "--out", o, "--set", "samplez=1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        eaglass(&["gs", "--out", o, "--set", "size=2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        eaglass(&["gs", "--out", o, "--set", "model=pm:1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        eaglass(&["gs", "--solver", "oracle", "--out", o, "--set", "size=6"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        eaglass(&["gs", "--solver", "annealing"]).status.code(),
        Some(2)
    );
    // the ferromagnet's antiperiodic wall has many positions
    let tie = eaglass(&[
        "fluct",
        "--out",
        o,
        "--set",
        "model=const:1",
        "--set",
        "size=6",
        "--set",
        "window=2",
    ]);
    assert_eq!(tie.status.code(), Some(3));
    let blocked = dir.path().join("file");
    std::fs::write(&blocked, "").unwrap();
    let io = eaglass(&[
        "gs",
        "--out",
        blocked.join("sub").to_str().unwrap(),
        "--set",
        "size=3",
    ]);
    assert_eq!(io.status.code(), Some(4));
}
