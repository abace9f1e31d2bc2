//! Feature modulation: fit per-feature telic/paratelic Gaussian moments on
//! normalized training data and shift paratelic feature values onto the
//! telic distribution with the affine moment-matching transform
//! `x' = (sigma_t/sigma_p) * x + mu_t - (sigma_t/sigma_p) * mu_p`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{feature_index, group_indices, FeatureGroup, MotivState, FEATURE_DICTIONARY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMoments {
    pub mu_telic: f64,
    pub sigma_telic: f64,
    pub mu_paratelic: f64,
    pub sigma_paratelic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationParams {
    /// Feature name -> fitted moments; keys all belong to selected groups.
    pub entries: BTreeMap<String, FeatureMoments>,
    pub selected_groups: BTreeSet<FeatureGroup>,
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fits per-feature sample moments (n-1 denominator) over telic and
/// paratelic training sessions, for every feature in the selected groups.
/// Rows must be normalized with the same scaler later used at apply time.
pub fn fit_modulation(
    rows: &[Vec<f64>],
    states: &[MotivState],
    selected_groups: &BTreeSet<FeatureGroup>,
) -> Result<ModulationParams> {
    if rows.len() != states.len() {
        return Err(Error::Data("state / row count mismatch".into()));
    }
    let telic: Vec<&Vec<f64>> = rows
        .iter()
        .zip(states)
        .filter(|(_, &s)| s == MotivState::Telic)
        .map(|(r, _)| r)
        .collect();
    let paratelic: Vec<&Vec<f64>> = rows
        .iter()
        .zip(states)
        .filter(|(_, &s)| s == MotivState::Paratelic)
        .map(|(r, _)| r)
        .collect();
    if telic.len() < 2 || paratelic.len() < 2 {
        return Err(Error::StateCoverage(format!(
            "modulation fit needs >= 2 sessions per state (telic {}, paratelic {})",
            telic.len(),
            paratelic.len()
        )));
    }
    let mut entries = BTreeMap::new();
    for &group in selected_groups {
        for idx in group_indices(group) {
            let tv: Vec<f64> = telic.iter().map(|r| r[idx]).collect();
            let pv: Vec<f64> = paratelic.iter().map(|r| r[idx]).collect();
            let (mu_telic, sigma_telic) = moments(&tv);
            let (mu_paratelic, sigma_paratelic) = moments(&pv);
            entries.insert(
                FEATURE_DICTIONARY[idx].0.to_string(),
                FeatureMoments {
                    mu_telic,
                    sigma_telic,
                    mu_paratelic,
                    sigma_paratelic,
                },
            );
        }
    }
    Ok(ModulationParams {
        entries,
        selected_groups: selected_groups.clone(),
    })
}

impl ModulationParams {
    /// Transforms one feature value. A zero paratelic spread falls back to a
    /// pure mean shift.
    fn transform(m: &FeatureMoments, x: f64) -> f64 {
        if m.sigma_paratelic == 0.0 {
            x - m.mu_paratelic + m.mu_telic
        } else {
            let scale = m.sigma_telic / m.sigma_paratelic;
            scale * x + m.mu_telic - scale * m.mu_paratelic
        }
    }

    /// Applies the transform to a normalized feature row. Only paratelic
    /// sessions change; telic and unassigned rows pass through untouched, as
    /// do features outside the selected groups.
    pub fn apply_row(&self, row: &[f64], state: MotivState) -> Vec<f64> {
        if state != MotivState::Paratelic {
            return row.to_vec();
        }
        let mut out = row.to_vec();
        for (name, m) in &self.entries {
            let idx = feature_index(name).expect("params refer to dictionary features");
            out[idx] = Self::transform(m, out[idx]);
        }
        out
    }

    pub fn apply_all(&self, rows: &[Vec<f64>], states: &[MotivState]) -> Vec<Vec<f64>> {
        rows.iter()
            .zip(states)
            .map(|(r, &s)| self.apply_row(r, s))
            .collect()
    }

    /// Serializes to the line-delimited params format. 17 significant digits
    /// make the round trip bit-exact.
    pub fn to_text(&self) -> String {
        let groups: Vec<&str> = self.selected_groups.iter().map(|g| g.name()).collect();
        let mut out = format!("#groups\t{}\n", groups.join(","));
        for (name, m) in &self.entries {
            out.push_str(&format!(
                "{}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\n",
                name, m.mu_telic, m.sigma_telic, m.mu_paratelic, m.sigma_paratelic
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ModulationParams> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty params file".into()))?;
        let groups_field = header
            .strip_prefix("#groups\t")
            .ok_or_else(|| Error::Format("params file missing #groups header".into()))?;
        let mut selected_groups = BTreeSet::new();
        for g in groups_field.split(',').filter(|g| !g.is_empty()) {
            selected_groups.insert(FeatureGroup::parse(g)?);
        }
        let mut entries = BTreeMap::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!("bad params line {line:?}")));
            }
            let name = fields[0].to_string();
            if feature_index(&name).is_none() {
                return Err(Error::Format(format!("unknown feature {name:?}")));
            }
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}"))))
                .collect::<Result<_>>()?;
            entries.insert(
                name,
                FeatureMoments {
                    mu_telic: nums[0],
                    sigma_telic: nums[1],
                    mu_paratelic: nums[2],
                    sigma_paratelic: nums[3],
                },
            );
        }
        Ok(ModulationParams {
            entries,
            selected_groups,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<ModulationParams> {
        ModulationParams::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::feature_count;

    fn all_groups() -> BTreeSet<FeatureGroup> {
        FeatureGroup::ALL.iter().copied().collect()
    }

    fn rows_with_col0(telic: &[f64], paratelic: &[f64]) -> (Vec<Vec<f64>>, Vec<MotivState>) {
        let mut rows = Vec::new();
        let mut states = Vec::new();
        for &v in telic {
            let mut r = vec![0.0; feature_count()];
            r[0] = v;
            rows.push(r);
            states.push(MotivState::Telic);
        }
        for &v in paratelic {
            let mut r = vec![0.0; feature_count()];
            r[0] = v;
            rows.push(r);
            states.push(MotivState::Paratelic);
        }
        (rows, states)
    }

    #[test]
    fn fit_sample_moments() {
        let (rows, states) = rows_with_col0(&[0.2, 0.4, 0.6], &[0.5, 0.7, 0.9]);
        let params = fit_modulation(&rows, &states, &all_groups()).unwrap();
        let m = &params.entries[FEATURE_DICTIONARY[0].0];
        assert!((m.mu_telic - 0.4).abs() < 1e-12);
        assert!((m.sigma_telic - 0.2).abs() < 1e-12);
        assert!((m.mu_paratelic - 0.7).abs() < 1e-12);
        assert!((m.sigma_paratelic - 0.2).abs() < 1e-12);
    }

    #[test]
    fn identical_states_give_identity_transform() {
        let (rows, states) = rows_with_col0(&[0.1, 0.5, 0.9], &[0.1, 0.5, 0.9]);
        let params = fit_modulation(&rows, &states, &all_groups()).unwrap();
        for x in [0.0, 0.3, 1.0] {
            let mut row = vec![0.0; feature_count()];
            row[0] = x;
            let out = params.apply_row(&row, MotivState::Paratelic);
            assert!((out[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_hand_values() {
        let m = FeatureMoments {
            mu_telic: 0.4,
            sigma_telic: 0.1,
            mu_paratelic: 0.8,
            sigma_paratelic: 0.2,
        };
        // the paratelic mean maps to the telic mean
        assert!((ModulationParams::transform(&m, 0.8) - 0.4).abs() < 1e-12);
        // 0.5*1.0 + 0.4 - 0.5*0.8 = 0.5
        assert!((ModulationParams::transform(&m, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn telic_and_unassigned_pass_through() {
        let (rows, states) = rows_with_col0(&[0.2, 0.4, 0.6], &[0.5, 0.7, 0.9]);
        let params = fit_modulation(&rows, &states, &all_groups()).unwrap();
        let mut row = vec![0.0; feature_count()];
        row[0] = 0.77;
        assert_eq!(params.apply_row(&row, MotivState::Telic), row);
        assert_eq!(params.apply_row(&row, MotivState::Unassigned), row);
    }

    #[test]
    fn zero_paratelic_spread_falls_back_to_mean_shift() {
        let (rows, states) = rows_with_col0(&[0.2, 0.4, 0.6], &[0.5, 0.5, 0.5]);
        let params = fit_modulation(&rows, &states, &all_groups()).unwrap();
        let m = &params.entries[FEATURE_DICTIONARY[0].0];
        assert_eq!(m.sigma_paratelic, 0.0);
        let mut row = vec![0.0; feature_count()];
        row[0] = 0.5;
        let out = params.apply_row(&row, MotivState::Paratelic);
        assert!((out[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_state_fit_errors() {
        let (rows, states) = rows_with_col0(&[0.2, 0.4, 0.6], &[0.5]);
        assert!(matches!(
            fit_modulation(&rows, &states, &all_groups()),
            Err(Error::StateCoverage(_))
        ));
    }

    #[test]
    fn moment_matching_is_exact_on_training_data() {
        let telic = [0.11, 0.32, 0.53, 0.24, 0.45];
        let paratelic = [0.62, 0.83, 0.74, 0.95, 0.56];
        let (rows, states) = rows_with_col0(&telic, &paratelic);
        let params = fit_modulation(&rows, &states, &all_groups()).unwrap();
        let transformed: Vec<f64> = paratelic
            .iter()
            .map(|&x| {
                let mut row = vec![0.0; feature_count()];
                row[0] = x;
                params.apply_row(&row, MotivState::Paratelic)[0]
            })
            .collect();
        let (mean, sd) = super::moments(&transformed);
        let m = &params.entries[FEATURE_DICTIONARY[0].0];
        assert!((mean - m.mu_telic).abs() < 1e-9);
        assert!((sd - m.sigma_telic).abs() < 1e-9);
    }

    #[test]
    fn transform_preserves_order_and_affinity() {
        let m = FeatureMoments {
            mu_telic: 0.3,
            sigma_telic: 0.15,
            mu_paratelic: 0.6,
            sigma_paratelic: 0.25,
        };
        let f = |x| ModulationParams::transform(&m, x);
        assert!(f(0.2) < f(0.4));
        assert!(f(0.4) < f(0.9));
        // affine: equal input increments give equal output increments
        let d1 = f(0.5) - f(0.4);
        let d2 = f(0.8) - f(0.7);
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let (rows, states) = rows_with_col0(
            &[0.123456789012345, 0.3, 1.0 / 3.0],
            &[0.9, 2.0 / 7.0, 0.5567],
        );
        let params = fit_modulation(&rows, &states, &all_groups()).unwrap();
        let text = params.to_text();
        let back = ModulationParams::from_text(&text).unwrap();
        assert_eq!(params, back);
        assert_eq!(back.to_text(), text);
    }
}
