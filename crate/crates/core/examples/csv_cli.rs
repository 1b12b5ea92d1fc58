//! Writes a small CSV and runs the `estimate` command on it in-process.

use std::io::Write;

fn main() -> std::io::Result<()> {
    let path = std::env::temp_dir().join("mar_impute_example.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "x1,y,z")?;
    for (x, y, z) in [
        (0.5, "1.2", 1),
        (-0.3, "-0.4", 1),
        (0.9, "2.1", 1),
        (-0.8, "-1.9", 1),
        (0.1, "", 0),
        (0.2, "0.1", 1),
        (-0.6, "NA", 0),
    ] {
        writeln!(f, "{x},{y},{z}")?;
    }
    drop(f);

    let args = [
        "mar-impute",
        "estimate",
        "--model",
        "linear",
        "--h",
        "y",
        "--method",
        "fi_weighted,pi,ipw",
        "--pi",
        "1/(1+exp(-x1))",
        path.to_str().expect("utf-8 temp path"),
    ];
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = mar_impute::cli::run(args, &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));
    println!("exit code {code}");
    Ok(())
}
