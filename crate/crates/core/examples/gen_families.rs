//! Regenerates the bundled closure families in `data/`.

use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let write = |name: &str, v: &Vec<et14::closure::ClosureSpec>| {
        let lines: Vec<String> = v.iter().map(|s| serde_json::to_string(s).unwrap()).collect();
        std::fs::write(dir.join(name), format!("[\n{}\n]\n", lines.join(",\n")))
    };
    write("x_families.json", &et14::closure::families::bundled_x())?;
    write("eta_families.json", &et14::closure::families::bundled_eta())?;
    write("sub5_families.json", &et14::closure::families::bundled_sub5())?;
    Ok(())
}
