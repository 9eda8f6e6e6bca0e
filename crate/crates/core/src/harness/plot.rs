//! Figure recipes and plot-data files.
//!
//! Each recipe runs the sweeps behind one figure and yields a [`PlotTable`].
//! [`emit_plot_data`] writes it twice: `<name>.csv` with a header row, and
//! `<name>.dat` with a `#` header line, space-separated columns and curves
//! separated by two blank lines (gnuplot `index` blocks).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;
use crate::harness::scenario::write_file;
use crate::harness::sweep::{run_sweep, ResultRow, SweepParam, SweepSpec};
use crate::ledger::{Address, EntityKind, EntityRecord, GasSchedule, LedgerChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Sum-rate and consumed bandwidth against W for several tau.
    Fig2,
    /// Sum-rate against W for several backhaul limits.
    Fig3,
    /// Served fraction and energy efficiency against drone count.
    Fig4,
    /// Sum-rate against drone count.
    Fig5,
    /// Transactions per block against block gas limit.
    Fig8,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig8];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig8 => "fig8",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown recipe {name:?}, expected fig2, fig3, fig4, fig5 or fig8")))
    }
}

/// Named columns plus rows grouped into curves.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub name: String,
    pub columns: Vec<String>,
    pub curves: Vec<Vec<Vec<f64>>>,
}

impl PlotTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        PlotTable {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            curves: Vec::new(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.curves.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.rows().next().is_none()
    }

    /// Column `name` of every row.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("no column {name}"));
        self.rows().map(|r| r[k]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_dat(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(" "));
        for (k, curve) in self.curves.iter().enumerate() {
            if k > 0 {
                out.push_str("\n\n");
            }
            for row in curve {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
        }
        out
    }
}

/// Generic table for one sweep: the swept value, every mean, every
/// standard error.
pub fn sweep_table(name: &str, param: SweepParam, rows: &[ResultRow]) -> Result<PlotTable> {
    let first = rows.first().ok_or_else(|| Error::invalid("no rows to plot"))?;
    let mut columns = vec![param.short_name().to_string()];
    columns.extend(first.mean.iter().map(|(n, _)| n.to_string()));
    columns.extend(first.stderr.iter().map(|(n, _)| format!("stderr_{n}")));
    let curve = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.value];
            v.extend(r.mean.iter().map(|(_, x)| *x));
            v.extend(r.stderr.iter().map(|(_, x)| *x));
            v
        })
        .collect();
    Ok(PlotTable {
        name: name.to_string(),
        columns,
        curves: vec![curve],
    })
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.dat`.
pub fn emit_plot_data(table: &PlotTable, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.is_empty() {
        return Err(Error::invalid(format!("plot table {} has no rows", table.name)));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", table.name));
    let dat = dir.join(format!("{}.dat", table.name));
    write_file(&csv, table.to_csv().as_bytes())?;
    write_file(&dat, table.to_dat().as_bytes())?;
    Ok(vec![csv, dat])
}

/// Available-bandwidth grid shared by the W sweeps: 25 MHz steps to 400 MHz.
pub fn bandwidth_grid() -> Vec<f64> {
    (1..=16).map(|k| k as f64 * 25e6).collect()
}

pub fn drone_grid() -> Vec<f64> {
    (1..=10).map(f64::from).collect()
}

pub fn gas_limit_grid() -> Vec<f64> {
    (1..=8).map(|k| k as f64 * 1e6).collect()
}

fn with(config: &ScenarioConfig, param: SweepParam, value: f64) -> Result<ScenarioConfig> {
    param.apply(config, value)
}

/// Runs the sweeps behind `figure` on top of `base`.
pub fn run_recipe(figure: Figure, base: &ScenarioConfig, replications: usize) -> Result<PlotTable> {
    match figure {
        Figure::Fig2 => {
            let mut table = PlotTable::new("fig2", &["W_hz", "tau", "sum_rate_bps", "bw_consumed_hz", "stderr"]);
            let config = with(base, SweepParam::Backhaul, 1.6e9)?;
            let config = with(&config, SweepParam::Density, 5e-6)?;
            for tau in [5.0, 10.0, 15.0, 20.0] {
                let config = with(&config, SweepParam::MaxLinks, tau)?;
                let spec = SweepSpec::new(SweepParam::Bandwidth, bandwidth_grid(), replications)?;
                let rows = run_sweep(&config, &spec)?;
                table.curves.push(
                    rows.iter()
                        .map(|r| {
                            vec![
                                r.value,
                                tau,
                                r.mean_of("sum_rate_bps"),
                                r.mean_of("avg_bw_hz"),
                                r.stderr_of("sum_rate_bps"),
                            ]
                        })
                        .collect(),
                );
            }
            Ok(table)
        }
        Figure::Fig3 => {
            let mut table = PlotTable::new("fig3", &["W_hz", "backhaul_bps", "sum_rate_bps", "stderr"]);
            let config = with(base, SweepParam::Density, 7e-6)?;
            for backhaul in [1.5e9, 2.0e9, 2.5e9] {
                let config = with(&config, SweepParam::Backhaul, backhaul)?;
                let spec = SweepSpec::new(SweepParam::Bandwidth, bandwidth_grid(), replications)?;
                let rows = run_sweep(&config, &spec)?;
                table.curves.push(
                    rows.iter()
                        .map(|r| vec![r.value, backhaul, r.mean_of("sum_rate_bps"), r.stderr_of("sum_rate_bps")])
                        .collect(),
                );
            }
            Ok(table)
        }
        Figure::Fig4 | Figure::Fig5 => {
            let mut table = if figure == Figure::Fig4 {
                PlotTable::new(
                    "fig4",
                    &["V", "density_per_m2", "served_frac", "ee_bps_per_w", "stderr_served", "stderr_ee"],
                )
            } else {
                PlotTable::new("fig5", &["V", "density_per_m2", "sum_rate_bps", "stderr"])
            };
            let config = with(base, SweepParam::Backhaul, f64::INFINITY)?;
            for density in [3e-6, 5e-6, 7e-6] {
                let config = with(&config, SweepParam::Density, density)?;
                let spec = SweepSpec::new(SweepParam::DroneCount, drone_grid(), replications)?;
                let rows = run_sweep(&config, &spec)?;
                table.curves.push(
                    rows.iter()
                        .map(|r| {
                            if figure == Figure::Fig4 {
                                vec![
                                    r.value,
                                    density,
                                    r.mean_of("served_frac"),
                                    r.mean_of("ee_bps_per_w"),
                                    r.stderr_of("served_frac"),
                                    r.stderr_of("ee_bps_per_w"),
                                ]
                            } else {
                                vec![r.value, density, r.mean_of("sum_rate_bps"), r.stderr_of("sum_rate_bps")]
                            }
                        })
                        .collect(),
                );
            }
            Ok(table)
        }
        Figure::Fig8 => {
            let mut table = PlotTable::new(
                "fig8",
                &["gas_limit", "tx_per_block_drone", "tx_per_block_rsu", "tx_per_block_sv"],
            );
            let spec = SweepSpec::new(SweepParam::BlockGasLimit, gas_limit_grid(), replications)?;
            let rows = run_sweep(base, &spec)?;
            table.curves.push(
                rows.iter()
                    .map(|r| {
                        vec![
                            r.value,
                            r.mean_of("tx_per_block_drone"),
                            r.mean_of("tx_per_block_rsu"),
                            r.mean_of("tx_per_block_sv"),
                        ]
                    })
                    .collect(),
            );
            Ok(table)
        }
    }
}

/// Worst-case authentication work: every requester is an unregistered SV,
/// so each lookup scans the whole registered list.
pub fn auth_scaling_table(users: &[usize], registered: &[usize], schedule: &GasSchedule) -> PlotTable {
    let mut columns = vec!["users".to_string()];
    columns.extend(registered.iter().map(|n| format!("comparisons_{n}_registered")));
    let cc = Address::derive(0xcc);
    let chains: Vec<LedgerChain> = registered
        .iter()
        .map(|&n| {
            let mut chain = LedgerChain::new(cc, *schedule);
            for k in 0..n {
                chain
                    .register_entity(cc, EntityRecord::sv(Address::derive(k as u64 + 1)))
                    .expect("fresh address");
            }
            while !chain.pending().is_empty() {
                chain.mine_block(u64::MAX);
            }
            chain
        })
        .collect();
    let curve = users
        .iter()
        .map(|&u| {
            let mut row = vec![u as f64];
            for chain in &chains {
                let total: usize = (0..u)
                    .map(|k| {
                        let outsider = Address::derive(u64::MAX - k as u64);
                        chain.authenticate(EntityKind::Sv, &outsider).comparisons
                    })
                    .sum();
                row.push(total as f64);
            }
            row
        })
        .collect();
    PlotTable {
        name: "auth_scaling".to_string(),
        columns,
        curves: vec![curve],
    }
}
