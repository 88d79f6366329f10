//! Drives the command line in-process, as the `layerpot` binary does.

fn main() {
    let out = std::env::temp_dir().join("layerpot-example");
    let out = out.to_string_lossy();
    for args in [
        vec!["layerpot", "capacity", "--geometry", "lshape", "--panels", "16"],
        vec!["layerpot", "solve", "--geometry", "lshape", "--scale", "0.25", "--problem", "trans2", "--data", "roundtrip"],
    ] {
        let code = layerpot::cli::run(args.iter().copied().chain(["--out", &out]));
        println!("exit code {code}");
    }
}
