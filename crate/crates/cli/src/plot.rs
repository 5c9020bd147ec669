//! Emits a matplotlib script that draws a CSV produced by this tool.
//!
//! Grid output is laid out as one figure per magnitude ratio, with the
//! sparsity level down the rows and the positive proportion across the
//! columns.

use crate::config::Mode;
use std::path::Path;

const PRELUDE: &str = r#"import sys
import pandas as pd
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else DEFAULT_CSV
df = pd.read_csv(path)
"#;

const CURVE: &str = r#"fig, ax = plt.subplots(figsize=(6, 4))
for col, label in [("power_dim_fit", "DIM test"), ("power_pim_fit", "PIM test")]:
    if df[col].notna().any():
        ax.plot(df["delta"], df[col], label=label)
ax.set_xlabel("Delta")
ax.set_ylabel("power")
ax.set_ylim(0, 1)
ax.legend()
fig.tight_layout()
fig.savefig("power_curve.png", dpi=150)
"#;

const GRID: &str = r#"f1s = sorted(df["f1"].unique())
f2s = sorted(df["f2"].unique())
for f3 in sorted(df["f3"].unique()):
    fig, axes = plt.subplots(len(f1s), len(f2s), figsize=(3 * len(f2s), 2.6 * len(f1s)),
                             sharex=True, sharey=True, squeeze=False)
    for i, f1 in enumerate(f1s):
        for j, f2 in enumerate(f2s):
            ax = axes[i][j]
            cell = df[(df.f1 == f1) & (df.f2 == f2) & (df.f3 == f3)]
            for fit, label in [("dim", "DIM test"), ("pim", "PIM test")]:
                sub = cell[cell.fit == fit]
                if len(sub):
                    ax.plot(sub["delta"], sub["power"], label=label)
            ax.set_title(f"f1={f1:g}, f2={f2:g}", fontsize=9)
            ax.set_ylim(0, 1)
    axes[0][0].legend(fontsize=8)
    fig.suptitle(f"f3 = {f3:g}")
    fig.tight_layout()
    fig.savefig(f"power_grid_f3_{f3:g}.png", dpi=150)
"#;

const MC: &str = r#"fig, ax = plt.subplots(figsize=(6, 4))
for fit, sub in df.groupby("fit"):
    ax.errorbar(sub["delta"], sub["rate"], yerr=3 * sub["se"], fmt="o-", capsize=3, label=f"{fit.upper()} test")
ax.set_xlabel("Delta")
ax.set_ylabel("rejection rate")
ax.legend()
fig.tight_layout()
fig.savefig("rejection_rates.png", dpi=150)
"#;

/// Python source that plots the CSV at `csv` (or the path given as its
/// first argument).
pub fn plot_script(mode: Mode, csv: Option<&Path>) -> String {
    let default = csv.map_or("power.csv".to_string(), |p| p.display().to_string());
    let body = match mode {
        Mode::Curve => CURVE,
        Mode::Grid => GRID,
        Mode::Mc => MC,
    };
    format!(
        "{}\n{}",
        PRELUDE.replace("DEFAULT_CSV", &format!("{default:?}")),
        body
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_names_the_csv_and_mode() {
        let s = plot_script(Mode::Grid, Some(Path::new("out/grid.csv")));
        assert!(s.contains("\"out/grid.csv\""));
        assert!(s.contains("f3"));
        assert!(plot_script(Mode::Curve, None).contains("\"power.csv\""));
    }
}
