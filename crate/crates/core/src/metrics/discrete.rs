use super::MetricError;

/// Exact information quantities of a joint probability table.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInfo {
    pub joint_entropy: f64,
    pub marginal_entropies: Vec<f64>,
    /// `sum_j H(v_j) - H(v)`.
    pub tc: f64,
    /// `I(v_0; v_1..)`, the dependence of the first axis on all others.
    pub mi_first_rest: f64,
}

/// Enumerates a row-major joint table of shape `dims`.
pub fn brute_force_discrete(table: &[f64], dims: &[usize]) -> Result<DiscreteInfo, MetricError> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(MetricError::InvalidTable(format!("dimensions {dims:?}")));
    }
    let size: usize = dims.iter().product();
    if table.len() != size {
        return Err(MetricError::InvalidTable(format!("{} entries for shape {dims:?}", table.len())));
    }
    if table.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(MetricError::InvalidTable("entries must be finite and non-negative".into()));
    }
    let total: f64 = table.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(MetricError::InvalidTable(format!("entries sum to {total}")));
    }
    let mut marginals: Vec<Vec<f64>> = dims.iter().map(|&k| vec![0.0; k]).collect();
    let first = dims[0];
    let rest = size / first;
    let mut rest_marginal = vec![0.0; rest];
    for (flat, &p) in table.iter().enumerate() {
        let mut r = flat;
        for a in (0..dims.len()).rev() {
            marginals[a][r % dims[a]] += p;
            r /= dims[a];
        }
        rest_marginal[flat % rest] += p;
    }
    let joint_entropy = entropy(table);
    let marginal_entropies: Vec<f64> = marginals.iter().map(|m| entropy(m)).collect();
    let tc = marginal_entropies.iter().sum::<f64>() - joint_entropy;
    let mi_first_rest = marginal_entropies[0] + entropy(&rest_marginal) - joint_entropy;
    Ok(DiscreteInfo {
        joint_entropy,
        marginal_entropies,
        tc,
        mi_first_rest,
    })
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}
