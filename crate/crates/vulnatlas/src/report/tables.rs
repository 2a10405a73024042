//! Canonical CSV table emission.

use crate::cluster::{ClusterProfile, KDiagnostics};
use crate::stats::{CorrelationMatrix, EjOutcome};

/// Cluster-profile table: clusters as columns, variables as rows, plus a
/// size row.
pub fn cluster_profile_csv(profile: &ClusterProfile) -> String {
    let k = profile.sizes.len();
    let mut out = String::from("variable");
    for c in 0..k {
        out.push_str(&format!(",cluster_{}", c + 1));
    }
    out.push('\n');
    for (vi, name) in profile.variables.iter().enumerate() {
        out.push_str(name);
        for c in 0..k {
            out.push_str(&format!(",{}", profile.means[c][vi]));
        }
        out.push('\n');
    }
    out.push_str("size");
    for &s in &profile.sizes {
        out.push_str(&format!(",{s}"));
    }
    out.push('\n');
    out
}

/// Long-form correlation table: one row per unordered pair.
pub fn correlation_csv(matrix: &CorrelationMatrix) -> String {
    let mut out = String::from("var_a,var_b,r,n_pairs\n");
    let k = matrix.labels.len();
    for i in 0..k {
        for j in (i + 1)..k {
            let r = matrix.values[i][j]
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                matrix.labels[i], matrix.labels[j], r, matrix.n_pairs[i][j]
            ));
        }
    }
    out
}

/// EJ comparison table: statistic, df, p per variable; skips carry reasons.
pub fn ej_csv(outcomes: &[EjOutcome]) -> String {
    let mut out = String::from("variable,test,group_mean,citywide_mean,statistic,df,p,skipped_reason\n");
    for o in outcomes {
        match o {
            EjOutcome::Tested(cmp) => {
                let kind = match cmp.kind {
                    crate::stats::TestKind::WelchT => "welch_t",
                    crate::stats::TestKind::ChiSquare => "chi_square",
                };
                let fmt = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},\n",
                    cmp.variable,
                    kind,
                    fmt(cmp.group_mean),
                    fmt(cmp.reference_mean),
                    cmp.statistic,
                    cmp.df,
                    cmp.p
                ));
            }
            EjOutcome::Skipped { variable, reason } => {
                out.push_str(&format!("{variable},,,,,,,{}\n", reason.replace(',', ";")));
            }
        }
    }
    out
}

/// k-selection table: silhouette and WCSS per candidate k.
pub fn k_selection_csv(table: &[KDiagnostics]) -> String {
    let mut out = String::from("k,mean_silhouette,wcss\n");
    for row in table {
        out.push_str(&format!("{},{},{}\n", row.k, row.mean_silhouette, row.wcss));
    }
    out
}

/// VIF table.
pub fn vif_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("predictor,vif\n");
    for (name, v) in rows {
        if v.is_infinite() {
            out.push_str(&format!("{name},inf\n"));
        } else {
            out.push_str(&format!("{name},{v}\n"));
        }
    }
    out
}
