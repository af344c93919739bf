//! Driving an experiment through the configuration layer without writing
//! files: parse arguments, execute, inspect verdicts.

use ergoloop::cli::{execute, parse_config, Parsed};

fn main() {
    let args = ["ergoloop", "average", "--res", "16", "--fields", "2", "--seed", "5"];
    let cfg = match parse_config(args) {
        Ok(Parsed::Config(cfg)) => cfg,
        Ok(Parsed::Info(text)) => return print!("{text}"),
        Err(usage) => return eprint!("{usage}"),
    };
    let (report, csv, _) = execute(&cfg).expect("run");
    for v in &report.verdicts {
        println!("{} [{}] {}", if v.pass { "PASS" } else { "FAIL" }, v.source_tag, v.name);
    }
    if let Some((name, rows)) = csv {
        println!("{name}: {} rows, header {:?}", rows.len() - 1, rows[0]);
    }
}
