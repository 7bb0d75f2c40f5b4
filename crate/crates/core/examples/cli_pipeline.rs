//! Drives the command-line runner end to end in a scratch directory.

use metaprism::runner::run_cli;

fn main() {
    let root = std::env::temp_dir().join(format!("metaprism-example-{}", std::process::id()));
    let dir = |name: &str| root.join(name).to_string_lossy().into_owned();
    let small = ["--i-count", "8", "--j-count", "2", "--k-users", "3"];
    let steps: Vec<Vec<String>> = vec![
        vec!["sweep-ideal".into(), "--theta-points".into(), "201".into()],
        [
            vec!["synth".to_string()],
            small.iter().map(|s| s.to_string()).collect(),
        ]
        .concat(),
        [
            vec![
                "optimize".to_string(),
                "--n-alpha".into(),
                "40".into(),
                "--n-gamma".into(),
                "32".into(),
            ],
            small.iter().map(|s| s.to_string()).collect(),
        ]
        .concat(),
        vec!["report".into(), "--input".into(), dir("optimize")],
    ];
    for step in steps {
        let name = step[0].clone();
        let mut args = vec!["metaprism".to_string(), "--out".into(), dir(&name)];
        args.extend(step);
        println!("== {name}");
        let code = run_cli(args);
        assert_eq!(code, 0, "{name} exited with {code}");
    }
    std::fs::remove_dir_all(&root).ok();
}
