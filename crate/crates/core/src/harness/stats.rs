use std::collections::BTreeSet;

use num_rational::Ratio;

use super::HarnessError;
use crate::types::SearchTrace;

/// Two-sided 95% Student t critical values t_{0.975, df} for df = 1..=200.
#[rustfmt::skip]
const T_975: [f64; 200] = [
    12.706204736432095, 4.302652729696142, 3.182446305284263, 2.7764451051977987,
    2.570581835636314, 2.4469118511449692, 2.3646242515927844, 2.306004135204166,
    2.2621571628540993, 2.2281388519649385, 2.200985160082949, 2.1788128296634177,
    2.1603686564610127, 2.1447866879169273, 2.131449545559323, 2.1199052992210112,
    2.1098155778331806, 2.10092204024096, 2.093024054408263, 2.0859634472658364,
    2.079613844727662, 2.0738730679040147, 2.0686576104190406, 2.0638985616280205,
    2.059538552753294, 2.055529438642871, 2.0518305164802833, 2.048407141795244,
    2.045229642132703, 2.0422724563012373, 2.0395134463964077, 2.036933343460101,
    2.0345152974493383, 2.032244509317718, 2.0301079282503425, 2.0280940009804502,
    2.0261924630291093, 2.024394163911969, 2.0226909200367604, 2.0210753903062733,
    2.019540970441376, 2.018081702818444, 2.016692199227824, 2.0153675744437636,
    2.014103388880846, 2.0128955989194286, 2.0117405137297655, 2.010634757624232,
    2.0095752371292397, 2.008559112100761, 2.007583770315836, 2.006646805061688,
    2.0057459953178687, 2.004879288188057, 2.004044783289146, 2.003240718847872,
    2.002465459291007, 2.0017174841452356, 2.0009953780882674, 2.00029782201426,
    1.9996235849949393, 1.9989715170333786, 1.998340542520741, 1.9977296543176926,
    1.9971379083920033, 1.9965644189523113, 1.9960083540252962, 1.9954689314298435,
    1.9949454151072374, 1.994437111771186, 1.993943367845625, 1.9934635666618716,
    1.992997125889855, 1.9925434951809322, 1.9921021540022417, 1.9916726096446642,
    1.9912543953883843, 1.9908470688116904, 1.9904502102301282, 1.9900634212544457,
    1.9896863234569024, 1.9893185571365721, 1.9889597801751624, 1.9886096669757087,
    1.9882679074772216, 1.9879342062390202, 1.9876082815890703, 1.987289864831169,
    1.986978699506281, 1.9866745407037676, 1.9863771544186173, 1.98608631695113,
    1.9858018143458234, 1.985523441866604, 1.9852510035091888, 1.9849843115310182,
    1.9847231860271193, 1.984467454426692, 1.9842169515086827, 1.9839715184496334,
    1.983731002885281, 1.98349525849594, 1.98326414470971, 1.9830375264229898,
    1.9828152737371543, 1.9825972617102907, 1.9823833701230174, 1.9821734832574511,
    1.981967489688474, 1.98176528208651, 1.9815667570310707, 1.9813718148344004,
    1.98118035937458, 1.9809922979375063, 1.9808075410672, 1.9806260024239375,
    1.9804475986497292, 1.9802722492407059, 1.980099876426006, 1.9799304050527766,
    1.9797637624769302, 1.979599878459331, 1.9794386850670895, 1.9792801165796825,
    1.979124109399617, 1.9789706019673934, 1.9788195346805206, 1.978670849816362,
    1.978524491458605, 1.9783804054271528, 1.9782385392112583, 1.9780988419057233,
    1.9779612641500013, 1.9778257580700527, 1.977692277222804, 1.9775607765430832,
    1.9774312122928936, 1.9773035420129161, 1.977177724476122, 1.9770537196433882,
    1.9769314886210219, 1.9768109936200895, 1.976692197917468, 1.9765750658185364,
    1.9764595626214159, 1.9763456545827003, 1.9762333088845878, 1.9761224936033632,
    1.976013177679155, 1.9759053308869137, 1.9757989238085503, 1.9756939278061865,
    1.9755903149964584, 1.9754880582258318, 1.9753871310468782, 1.9752875076954723,
    1.975189163068866, 1.975092072704601, 1.9749962127602252, 1.9749015599937718,
    1.974808091744976, 1.9747157859171878, 1.9746246209599578, 1.9745345758522654,
    1.9744456300863589, 1.9743577636521854, 1.9742709570223844, 1.9741851911378205,
    1.9741004473936334, 1.9740167076257822, 1.9739339540980687, 1.9738521694896134,
    1.973771336882769, 1.9736914397514558, 1.9736124619498971, 1.973534387701743,
    1.9734572015895642, 1.9733808885447028, 1.9733054338374663, 1.9732308230676485,
    1.9731570421553688, 1.9730840773322158, 1.973011915132679, 1.9729405423858688,
    1.9728699462074988, 1.9728001139921347, 1.9727310334056902, 1.9726626923781652,
    1.9725950790966154, 1.9725281819983447, 1.9724619897643145, 1.9723964913127592,
    1.9723316757930007, 1.972267532579456, 1.9722040512658325, 1.9721412216594967,
    1.9720790337760217, 1.9720174778338955, 1.971956544249395, 1.9718962236316089,
];

/// Normal quantile used beyond the table.
const Z_975: f64 = 1.959963984540054;

/// t_{0.975, df}; `df` must be at least 1.
pub fn t_critical_975(df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    T_975.get(df - 1).copied().unwrap_or(Z_975)
}

/// Fraction of tasks with a hidden-correct node among nodes 1..=j.
///
/// `traces` holds one trace per task from a single run. Nodes beyond the end
/// of an early-terminated trace simply do not exist, so such a trace counts
/// with what it realized.
pub fn pass_at_k(traces: &[SearchTrace], j: u32) -> Result<Ratio<i64>, HarnessError> {
    if traces.is_empty() {
        return Err(HarnessError::NoTasks);
    }
    let mut seen = BTreeSet::new();
    let mut solved = 0i64;
    for trace in traces {
        if !seen.insert(trace.task_id.as_str()) {
            return Err(HarnessError::DuplicateTask(trace.task_id.clone()));
        }
        let mut hit = false;
        for node in trace.nodes.iter().filter(|n| n.node_id <= j) {
            match node.hidden_result {
                Some(v) => hit |= v,
                None => {
                    return Err(HarnessError::UnevaluatedTrace {
                        task_id: trace.task_id.clone(),
                        node_id: node.node_id,
                    })
                }
            }
        }
        solved += hit as i64;
    }
    Ok(Ratio::new(solved, traces.len() as i64))
}

/// Mean and half-width of the two-sided t interval. Only `level = 0.95` is
/// supported.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64), HarnessError> {
    if level != 0.95 {
        return Err(HarnessError::UnsupportedLevel(level));
    }
    let n = values.len();
    if n < 2 {
        return Err(HarnessError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, t_critical_975(n - 1) * var.sqrt() / (n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::StrategyKind;

    fn trace(task: &str, verdicts: &[bool]) -> SearchTrace {
        let mut t = SearchTrace::new(task, StrategyKind::Bon, "bon", 16, 0);
        for &v in verdicts {
            let id = t.push("x".into(), None, None, 0.0, false);
            t.nodes[id as usize - 1].hidden_result = Some(v);
        }
        t
    }

    #[test]
    fn counts_tasks_solved_by_j() {
        let mut traces: Vec<_> = (0..6).map(|i| trace(&format!("t{i}"), &[false; 4])).collect();
        for i in 0..4 {
            traces.push(trace(&format!("s{i}"), &[false, true]));
        }
        assert_eq!(pass_at_k(&traces, 0).unwrap(), Ratio::from_integer(0));
        assert_eq!(pass_at_k(&traces, 1).unwrap(), Ratio::from_integer(0));
        assert_eq!(pass_at_k(&traces, 2).unwrap(), Ratio::new(2, 5));
        // short traces keep counting past their length
        assert_eq!(pass_at_k(&traces, 16).unwrap(), Ratio::new(2, 5));
    }

    #[test]
    fn missing_verdict_is_an_error() {
        let mut t = trace("a", &[false, true]);
        t.nodes[1].hidden_result = None;
        assert!(pass_at_k(std::slice::from_ref(&t), 1).is_ok());
        let err = pass_at_k(&[t], 2).unwrap_err();
        assert!(err.to_string().starts_with("unevaluated trace"));
    }

    #[test]
    fn duplicate_tasks_rejected() {
        let t = trace("a", &[true]);
        assert!(matches!(pass_at_k(&[t.clone(), t], 1), Err(HarnessError::DuplicateTask(_))));
    }

    #[test]
    fn interval_examples() {
        assert_eq!(confidence_interval(&[0.3, 0.3, 0.3], 0.95).unwrap(), (0.3, 0.0));
        let (m, h) = confidence_interval(&[0.0, 1.0], 0.95).unwrap();
        assert_eq!(m, 0.5);
        assert!((h - 6.353102368216047).abs() < 1e-12);
        let (m, h) = confidence_interval(&[0.4, 0.55, 0.5, 0.62, 0.48], 0.95).unwrap();
        assert!((m - 0.51).abs() < 1e-12);
        assert!((h - 0.10163457849431429).abs() < 1e-9);
        assert!(matches!(confidence_interval(&[1.0], 0.95), Err(HarnessError::TooFewValues(1))));
        assert!(confidence_interval(&[1.0, 2.0], 0.9).is_err());
    }

    #[test]
    fn table_edges() {
        assert_eq!(t_critical_975(1), 12.706204736432095);
        assert_eq!(t_critical_975(4), 2.7764451051977987);
        assert_eq!(t_critical_975(200), 1.9718962236316089);
        assert_eq!(t_critical_975(201), Z_975);
        assert!(T_975.windows(2).all(|w| w[0] > w[1]));
    }
}
