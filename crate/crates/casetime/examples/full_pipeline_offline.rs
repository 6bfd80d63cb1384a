//! The whole chain end to end in a temp directory, entirely offline:
//! extract -> annotate (fixture transport) -> evaluate -> report.
//!
//! ```bash
//! cargo run -p casetime --example full_pipeline_offline
//! ```

use std::path::Path;

fn run(args: &[&str]) {
    let code = casetime::cli::run(args.iter().map(|s| s.to_string()));
    assert_eq!(code, 0, "command failed: {args:?}");
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let corpus = tmp.path().join("corpus");
    let fixtures = tmp.path().join("responses");
    let reference = tmp.path().join("reference");
    std::fs::create_dir_all(&corpus)?;
    std::fs::create_dir_all(&fixtures)?;
    std::fs::create_dir_all(&reference)?;

    std::fs::write(
        corpus.join("PMC000401.txt"),
        "A title\n==== BODY\nCase report: a 44-year-old cyclist was admitted to \
         the hospital after a fall. A wrist fracture was reduced and he was \
         discharged the next day.\n==== Refs\n1. Ref.\n",
    )?;
    std::fs::write(
        fixtures.join("PMC000401.txt"),
        "fall from bicycle | -2\nadmitted to the hospital | 0\nwrist fracture | -2\n\
         reduction performed | 3\ndischarged | 24\n",
    )?;
    std::fs::write(
        reference.join("PMC000401.csv"),
        "event,time\nfall from bicycle,-2\nadmitted to the hospital,0\nwrist fracture,-2\n\
         reduction performed,2\ndischarged,24\n",
    )?;

    let manifest = tmp.path().join("manifest.tsv");
    let annotate_dir = tmp.path().join("annotate");
    let eval_dir = tmp.path().join("eval");
    let report_dir = tmp.path().join("report");

    run(&["casetime", "extract", "--root", corpus.to_str().unwrap(), "--out", manifest.to_str().unwrap()]);
    run(&[
        "casetime", "--offline", "annotate",
        "--manifest", manifest.to_str().unwrap(),
        "--out-dir", annotate_dir.to_str().unwrap(),
        "--fixtures", fixtures.to_str().unwrap(),
    ]);
    run(&[
        "casetime", "--offline", "evaluate",
        "--reference", reference.to_str().unwrap(),
        "--candidate", annotate_dir.join("timelines").to_str().unwrap(),
        "--out-dir", eval_dir.to_str().unwrap(),
    ]);
    run(&[
        "casetime", "report",
        "--reports", eval_dir.join("reports").to_str().unwrap(),
        "--out-dir", report_dir.to_str().unwrap(),
    ]);

    println!("\nsummary.json:");
    print!("{}", std::fs::read_to_string(report_dir.join("summary.json"))?);

    println!("\nfiles produced:");
    print_tree(tmp.path(), tmp.path())?;
    Ok(())
}

fn print_tree(root: &Path, dir: &Path) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok()).collect();
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            print_tree(root, &path)?;
        } else {
            println!("  {}", path.strip_prefix(root).unwrap().display());
        }
    }
    Ok(())
}
