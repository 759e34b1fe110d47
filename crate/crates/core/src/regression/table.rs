use crate::stats;

use super::{ModelFit, CONSTANT};

/// Coefficient table with one row per regressor and one column per model.
/// Cells read `estimate<stars> (std error)`; a regressor absent from a model
/// leaves its cell empty. The constant is listed last, followed by the
/// adjusted R² and observation count.
pub fn coefficient_table_csv(models: &[(&str, &ModelFit)]) -> String {
    let mut rows: Vec<&str> = Vec::new();
    for (_, fit) in models {
        for name in &fit.names {
            if name != CONSTANT && !rows.contains(&name.as_str()) {
                rows.push(name);
            }
        }
    }
    rows.push(CONSTANT);

    let mut out = String::from("regressor");
    for (label, _) in models {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for name in rows {
        out.push_str(name);
        for (_, fit) in models {
            out.push(',');
            if let Some(t) = fit.term(name) {
                out.push_str(&format!("{:.6}{} ({:.6})", t.estimate, stats::stars(t.p_value), t.std_error));
            }
        }
        out.push('\n');
    }
    out.push_str("adj_r2");
    for (_, fit) in models {
        out.push_str(&format!(",{:.6}", fit.adj_r2));
    }
    out.push('\n');
    out.push_str("n");
    for (_, fit) in models {
        out.push_str(&format!(",{}", fit.n_obs));
    }
    out.push('\n');
    out
}
