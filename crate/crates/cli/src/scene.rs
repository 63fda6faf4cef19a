use lidarsim_core::scene::validate_scene_spec;

/// Print the census and violations. `Ok(false)` when the scene parsed but
/// breaks an invariant.
pub fn validate(spec: &str) -> anyhow::Result<bool> {
    let report = validate_scene_spec(spec)?;
    println!("scene {}", report.name);
    println!("{:<24} {:<10} {:>9} mover", "id", "kind", "triangles");
    for o in &report.objects {
        println!(
            "{:<24} {:<10} {:>9} {}",
            o.id,
            format!("{:?}", o.kind).to_lowercase(),
            o.triangles,
            if o.mover { "yes" } else { "no" }
        );
    }
    println!(
        "{} objects, {} triangles, {} movers",
        report.objects.len(),
        report.triangle_count(),
        report.mover_count()
    );
    if report.is_valid() {
        println!("valid");
        return Ok(true);
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    println!("{} violations", report.violations.len());
    Ok(false)
}
