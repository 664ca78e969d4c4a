//! Named run bundles for the standard survey scenarios.
//!
//! Every entry is literal data: the trap parameters, the initial data and an
//! output plan. The command line binary and the long-running checks read the
//! same table, so any emitted run can be audited against exactly one entry
//! here. Ids follow a `fig*` numbering shared with the plotted surveys.

use std::f64::consts::PI;

use crate::classical::{CanonicalState, ClassicalState};
use crate::equilibria::GridSpec;
use crate::model::ModelParams;
use crate::sections::{Chart, CrossingDirection, SectionCoordinate, SectionSpec, SeedSpec};
use crate::C64;

/// Particle number shared by every bundled run.
pub const RUN_N: u32 = 30;

/// Tunneling rate shared by every bundled run. Negative, as for wells whose
/// separation is large compared to their width; the collision parameters are
/// quoted relative to this sign.
pub const RUN_OMEGA: f64 = -1.0;

/// `K2` of the state at `(K1, phi1, phi2) = (16, pi, 0)` with the same
/// energy as the depleted-well equilibrium. The solve lands on this value
/// for both `(chi, mu) = (5, 0.05)` and `(-5, -0.05)`, so one constant
/// serves the regular and the chaotic near-depleted-well runs.
pub const NEAR_SDW_K2: f64 = 0.071796769724487;

/// How a time-evolution bundle runs the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolveMode {
    Classical,
    Quantum,
    Both,
}

/// Equilibrium whose energy pins a section's shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShellAnchor {
    /// `(w1, w2) = (-1, 0)`: second well empty, the other two equally
    /// populated in opposite phase.
    DepletedWell,
    /// `w1 = e^{i 2pi/3} = conj(w2)`: the rotating state with the maximal
    /// circulation `sqrt(3) N`.
    Vortex,
}

impl ShellAnchor {
    pub fn state(self) -> ClassicalState {
        match self {
            Self::DepletedWell => {
                ClassicalState::new(C64::new(-1.0, 0.0), C64::new(0.0, 0.0))
            }
            Self::Vortex => {
                let v = C64::from_polar(1.0, 2.0 * PI / 3.0);
                ClassicalState::new(v, v.conj())
            }
        }
    }
}

/// Output plan of one bundle.
#[derive(Debug, Clone)]
pub enum PresetRun {
    /// Equilibrium survey over a rectangle of collision parameters. The
    /// bundle's own `chi`/`mu` are placeholders; the grids matter.
    StabilityMap { chi: GridSpec, mu: GridSpec },
    /// Twin-surface trajectories started on a list of sphere angles
    /// (`theta` measured from the pole where the third well holds
    /// everything), reported in sphere coordinates.
    SpherePortrait {
        thetas: Vec<f64>,
        phis: Vec<f64>,
        t_end: f64,
        sample_dt: f64,
    },
    /// Time evolution from a single initial state.
    Evolve {
        w1: C64,
        w2: C64,
        mode: EvolveMode,
        t_end: f64,
        sample_dt: f64,
    },
    /// Energy-shell section through a plane of one chart.
    Section {
        spec: SectionSpec,
        seeds: SeedSpec,
        shell: ShellAnchor,
        t_max: f64,
    },
}

/// One bundled run: id, a one-line summary, the trap, and the plan.
#[derive(Debug, Clone)]
pub struct Preset {
    pub id: &'static str,
    pub summary: &'static str,
    pub params: ModelParams,
    pub run: PresetRun,
}

fn trap(chi: f64, mu: f64) -> ModelParams {
    ModelParams::new(RUN_OMEGA, RUN_N, chi, mu).unwrap()
}

/// On-shell neighbor of the depleted-well state used by the `fig7`/`fig8`
/// runs: one extra particle in the first well, the balance solved on the
/// shell.
pub fn near_sdw_state() -> ClassicalState {
    CanonicalState {
        k1: 16.0,
        k2: NEAR_SDW_K2,
        phi1: PI,
        phi2: 0.0,
        n_particles: RUN_N as f64,
    }
    .to_state()
    .unwrap()
}

fn parameter_plane() -> (GridSpec, GridSpec) {
    (
        GridSpec::new(-10.0, 10.0, 401).unwrap(),
        GridSpec::new(-1.0, 1.0, 101).unwrap(),
    )
}

fn sdw_section() -> (SectionSpec, SeedSpec) {
    let spec = SectionSpec::new(
        (SectionCoordinate::Phi2, 0.0),
        CrossingDirection::Both,
        [SectionCoordinate::K1, SectionCoordinate::Phi1],
    )
    .unwrap();
    // Full sweep of the plane; cells off the shell are skipped and counted.
    let seeds = SeedSpec {
        chart: Chart::Canonical,
        frozen: vec![
            (SectionCoordinate::Phi2, GridSpec::new(0.0, 0.0, 1).unwrap()),
            (SectionCoordinate::K1, GridSpec::new(2.0, 28.0, 14).unwrap()),
            (
                SectionCoordinate::Phi1,
                GridSpec::new(-PI + PI / 8.0, PI, 16).unwrap(),
            ),
        ],
        solve: SectionCoordinate::K2,
        solve_range: (0.0, 29.5),
        scan_points: 400,
    };
    (spec, seeds)
}

fn vortex_section() -> (SectionSpec, SeedSpec) {
    let p2 = -(RUN_N as f64 / 2.0).sqrt();
    let spec = SectionSpec::new(
        (SectionCoordinate::P2, p2),
        CrossingDirection::Both,
        [SectionCoordinate::Q1, SectionCoordinate::P1],
    )
    .unwrap();
    let seeds = SeedSpec {
        chart: Chart::Cartesian,
        frozen: vec![
            (SectionCoordinate::P2, GridSpec::new(p2, p2, 1).unwrap()),
            (SectionCoordinate::Q1, GridSpec::new(-6.0, 6.0, 13).unwrap()),
            (SectionCoordinate::P1, GridSpec::new(-6.0, 6.0, 13).unwrap()),
        ],
        solve: SectionCoordinate::Q2,
        solve_range: (-7.7, 7.7),
        scan_points: 400,
    };
    (spec, seeds)
}

/// The full bundle table.
pub fn all() -> Vec<Preset> {
    let (plane_chi, plane_mu) = parameter_plane();
    let quarter_turns = vec![0.0, 0.5 * PI, PI, 1.5 * PI];
    // The middle latitudes on the phi = pi meridian orbit the persistent
    // twin root rather than the balanced state, so the below-threshold
    // portrait skips them.
    let outer_lats = vec![0.3, 0.8, 2.3, 2.8];
    let all_lats = vec![0.3, 0.8, 1.3, 1.8, 2.3, 2.8];
    let origin = C64::new(0.0, 0.0);
    let near_sdw = near_sdw_state();
    let v = C64::from_polar(1.0, 2.0 * PI / 3.0);
    let (sdw_spec, sdw_seeds) = sdw_section();
    let (vortex_spec, vortex_seeds) = vortex_section();

    vec![
        Preset {
            id: "fig1",
            summary: "count of coexisting equilibria over the collision-parameter plane",
            params: trap(0.0, 0.0),
            run: PresetRun::StabilityMap {
                chi: plane_chi,
                mu: plane_mu,
            },
        },
        Preset {
            id: "fig2",
            summary: "stability verdict of every equilibrium family over the same plane",
            params: trap(0.0, 0.0),
            run: PresetRun::StabilityMap {
                chi: plane_chi,
                mu: plane_mu,
            },
        },
        Preset {
            id: "fig3a",
            summary: "twin-surface portrait below the saddle-node threshold; all orbits ring the balanced state",
            params: trap(1.5, 0.0),
            run: PresetRun::SpherePortrait {
                thetas: outer_lats,
                phis: quarter_turns.clone(),
                t_end: 40.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig3b",
            summary: "twin-surface portrait just past the threshold; a separatrix splits oscillation from self-trapping",
            params: trap(1.98, 0.0),
            run: PresetRun::SpherePortrait {
                thetas: all_lats.clone(),
                phis: quarter_turns.clone(),
                t_end: 40.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig3c",
            summary: "twin-surface portrait with the balanced state destabilized",
            params: trap(3.0, 0.0),
            run: PresetRun::SpherePortrait {
                thetas: all_lats,
                phis: quarter_turns,
                t_end: 40.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig4-mst",
            summary: "population imbalance from the third-well pole; weak cross-collisions leave it self-trapped",
            params: trap(4.0, 0.04),
            run: PresetRun::Evolve {
                w1: origin,
                w2: origin,
                mode: EvolveMode::Both,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig4-jo",
            summary: "same start; tenfold cross-collisions restore the tunneling oscillation",
            params: trap(4.0, 0.4),
            run: PresetRun::Evolve {
                w1: origin,
                w2: origin,
                mode: EvolveMode::Both,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig5-mst",
            summary: "purity and opposite-phase occupation along the self-trapped run",
            params: trap(4.0, 0.04),
            run: PresetRun::Evolve {
                w1: origin,
                w2: origin,
                mode: EvolveMode::Quantum,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig5-jo",
            summary: "purity and opposite-phase occupation along the oscillating run",
            params: trap(4.0, 0.4),
            run: PresetRun::Evolve {
                w1: origin,
                w2: origin,
                mode: EvolveMode::Quantum,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig6a",
            summary: "section at phi2 = 0 on the depleted-well shell, regular side",
            params: trap(5.0, 0.05),
            run: PresetRun::Section {
                spec: sdw_spec,
                seeds: sdw_seeds.clone(),
                shell: ShellAnchor::DepletedWell,
                t_max: 300.0,
            },
        },
        Preset {
            id: "fig6b",
            summary: "section at phi2 = 0 on the depleted-well shell, chaotic side",
            params: trap(-5.0, -0.05),
            run: PresetRun::Section {
                spec: sdw_spec,
                seeds: sdw_seeds,
                shell: ShellAnchor::DepletedWell,
                t_max: 300.0,
            },
        },
        Preset {
            id: "fig7-regular",
            summary: "population dynamics beside the stable depleted well",
            params: trap(5.0, 0.05),
            run: PresetRun::Evolve {
                w1: near_sdw.w1,
                w2: near_sdw.w2,
                mode: EvolveMode::Classical,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig7-chaotic",
            summary: "population dynamics beside the unstable depleted well",
            params: trap(-5.0, -0.05),
            run: PresetRun::Evolve {
                w1: near_sdw.w1,
                w2: near_sdw.w2,
                mode: EvolveMode::Classical,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig8-regular",
            summary: "exact occupations and purity for the regular near-depleted-well start",
            params: trap(5.0, 0.05),
            run: PresetRun::Evolve {
                w1: near_sdw.w1,
                w2: near_sdw.w2,
                mode: EvolveMode::Quantum,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig8-chaotic",
            summary: "exact occupations and purity for the chaotic near-depleted-well start",
            params: trap(-5.0, -0.05),
            run: PresetRun::Evolve {
                w1: near_sdw.w1,
                w2: near_sdw.w2,
                mode: EvolveMode::Quantum,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig9a",
            summary: "section at p2 = -sqrt(N/2) on the vortex shell, stable case",
            params: trap(-1.0, -0.01),
            run: PresetRun::Section {
                spec: vortex_spec,
                seeds: vortex_seeds.clone(),
                shell: ShellAnchor::Vortex,
                t_max: 300.0,
            },
        },
        Preset {
            id: "fig9b",
            summary: "section at p2 = -sqrt(N/2) on the vortex shell, unstable case",
            params: trap(-5.0, -0.05),
            run: PresetRun::Section {
                spec: vortex_spec,
                seeds: vortex_seeds,
                shell: ShellAnchor::Vortex,
                t_max: 300.0,
            },
        },
        Preset {
            id: "fig10-regular",
            summary: "circulation beside the stable vortex: persistent one-signed rotation",
            params: trap(-1.0, -0.01),
            run: PresetRun::Evolve {
                w1: 1.05 * v,
                w2: 0.95 * v.conj(),
                mode: EvolveMode::Both,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
        Preset {
            id: "fig10-chaotic",
            summary: "circulation beside the unstable vortex: bounded but sign-wandering",
            params: trap(-5.0, -0.05),
            run: PresetRun::Evolve {
                w1: 1.05 * v,
                w2: 0.95 * v.conj(),
                mode: EvolveMode::Both,
                t_end: 50.0,
                sample_dt: 0.02,
            },
        },
    ]
}

pub fn find(id: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.id == id)
}

pub fn ids() -> Vec<&'static str> {
    all().iter().map(|p| p.id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::classical_energy;
    use crate::sections::chart_coords;

    #[test]
    fn ids_are_unique_and_findable() {
        let table = all();
        for (i, a) in table.iter().enumerate() {
            for b in &table[i + 1..] {
                assert_ne!(a.id, b.id);
            }
            assert!(find(a.id).is_some());
        }
        assert!(find("fig42").is_none());
        assert_eq!(ids().len(), table.len());
    }

    #[test]
    fn every_bundle_uses_the_shared_trap() {
        for p in all() {
            assert_eq!(p.params.omega, RUN_OMEGA, "{}", p.id);
            assert_eq!(p.params.n_particles, RUN_N, "{}", p.id);
        }
    }

    #[test]
    fn near_sdw_start_sits_on_both_shells() {
        let anchor = ShellAnchor::DepletedWell.state();
        let s = near_sdw_state();
        for (chi, mu) in [(5.0, 0.05), (-5.0, -0.05)] {
            let p = trap(chi, mu);
            let gap = (classical_energy(&s, &p) - classical_energy(&anchor, &p)).abs();
            assert!(gap < 1e-12, "chi = {chi}: off shell by {gap:.3e}");
        }
        let c = s.to_canonical(RUN_N);
        assert!((c.k1 - 16.0).abs() < 1e-12);
        assert!(c.k1 > RUN_N as f64 / 2.0);
    }

    #[test]
    fn section_bundles_are_internally_consistent() {
        for p in all() {
            let PresetRun::Section {
                spec,
                seeds,
                shell,
                t_max,
            } = p.run
            else {
                continue;
            };
            assert!(t_max > 0.0);
            spec.validate().unwrap();
            seeds.validate().unwrap();
            assert_eq!(spec.chart, seeds.chart, "{}", p.id);
            // The anchoring equilibrium must lie on the section plane.
            let coords = chart_coords(spec.chart, &shell.state(), p.params.n_particles);
            let (coord, value) = spec.condition;
            assert!(
                (coords[coord.index()] - value).abs() < 1e-12,
                "{}: anchor off plane by {:.3e}",
                p.id,
                (coords[coord.index()] - value).abs()
            );
        }
    }

    #[test]
    fn portrait_angles_stay_inside_the_chart() {
        for p in all() {
            let PresetRun::SpherePortrait { thetas, phis, .. } = p.run else {
                continue;
            };
            assert!(!thetas.is_empty() && !phis.is_empty());
            for t in thetas {
                // Away from both poles: theta = pi is the chart boundary.
                assert!(t > 0.0 && t < 3.0, "{}: theta = {t}", p.id);
            }
        }
    }

    #[test]
    fn evolve_starts_are_finite_and_modes_cover_both_sides() {
        let mut classical = 0;
        let mut quantum = 0;
        for p in all() {
            let PresetRun::Evolve { w1, w2, mode, t_end, sample_dt } = p.run else {
                continue;
            };
            assert!(w1.is_finite() && w2.is_finite(), "{}", p.id);
            assert!(t_end > 0.0 && sample_dt > 0.0 && sample_dt < t_end);
            match mode {
                EvolveMode::Classical => classical += 1,
                EvolveMode::Quantum => quantum += 1,
                EvolveMode::Both => {
                    classical += 1;
                    quantum += 1;
                }
            }
        }
        assert!(classical >= 2 && quantum >= 2);
    }
}
