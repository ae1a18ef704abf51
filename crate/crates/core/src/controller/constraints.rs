use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ControllerError;
use crate::kinematics::RobotDescription;

/// `follower` velocity is `ratio` times the `leader` velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub follower: String,
    pub leader: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default)]
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub locked: BTreeSet<String>,
}

/// The coupling matrix `S` together with the joints that form its columns.
#[derive(Debug, Clone)]
pub struct Coupled {
    /// n x m map from independent to full joint velocities.
    pub matrix: DMatrix<f64>,
    /// Full-space index of each independent joint, in column order.
    pub independent: Vec<usize>,
}

impl ConstraintSet {
    pub fn lock<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            couplings: Vec::new(),
            locked: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self, desc: &RobotDescription) -> Result<(), ControllerError> {
        let known = |name: &str| {
            desc.joint_index(name)
                .map(|_| ())
                .ok_or_else(|| ControllerError::UnknownJoint(name.to_string()))
        };
        for name in &self.locked {
            known(name)?;
        }
        let mut leader_of: HashMap<&str, &str> = HashMap::new();
        for c in &self.couplings {
            known(&c.follower)?;
            known(&c.leader)?;
            if !c.ratio.is_finite() {
                return Err(ControllerError::InvalidConstraint(format!(
                    "coupling of '{}' has non-finite ratio",
                    c.follower
                )));
            }
            if leader_of.insert(&c.follower, &c.leader).is_some() {
                return Err(ControllerError::InvalidConstraint(format!(
                    "joint '{}' follows more than one leader",
                    c.follower
                )));
            }
            if self.locked.contains(&c.follower) {
                return Err(ControllerError::InvalidConstraint(format!(
                    "joint '{}' is both locked and a follower",
                    c.follower
                )));
            }
        }
        for start in leader_of.keys() {
            let mut cursor = *start;
            let mut steps = 0;
            while let Some(&next) = leader_of.get(cursor) {
                steps += 1;
                if next == *start || steps > leader_of.len() {
                    return Err(ControllerError::InvalidConstraint(format!(
                        "coupling cycle through '{start}'"
                    )));
                }
                cursor = next;
            }
        }
        Ok(())
    }

    /// Build `S`. Locked joints get zero rows, followers get their ratio times
    /// the leader's row (chains compose), every other joint is a column.
    pub fn coupling_matrix(&self, desc: &RobotDescription) -> Result<Coupled, ControllerError> {
        self.validate(desc)?;
        let n = desc.joint_count();
        let mut follower: Vec<Option<(usize, f64)>> = vec![None; n];
        for c in &self.couplings {
            let f = desc.joint_index(&c.follower).expect("validated");
            let l = desc.joint_index(&c.leader).expect("validated");
            follower[f] = Some((l, c.ratio));
        }
        let locked: Vec<bool> = desc
            .joints
            .iter()
            .map(|j| self.locked.contains(&j.name))
            .collect();

        let independent: Vec<usize> = (0..n)
            .filter(|&j| !locked[j] && follower[j].is_none())
            .collect();
        let mut column = vec![None; n];
        for (c, &j) in independent.iter().enumerate() {
            column[j] = Some(c);
        }

        let mut matrix = DMatrix::zeros(n, independent.len());
        for j in 0..n {
            // Walk to the root of the coupling chain, multiplying ratios.
            let mut gain = 1.0;
            let mut cursor = j;
            loop {
                if locked[cursor] {
                    gain = 0.0;
                    break;
                }
                match follower[cursor] {
                    Some((leader, ratio)) => {
                        gain *= ratio;
                        cursor = leader;
                    }
                    None => break,
                }
            }
            if gain != 0.0 {
                if let Some(c) = column[cursor] {
                    matrix[(j, c)] = gain;
                }
            }
        }
        Ok(Coupled { matrix, independent })
    }
}
