//! Scenarios shipped with the binary.

pub const SHIPPED: [(&str, &str); 6] = [
    ("heat_exact", include_str!("../scenarios/heat_exact.cfg")),
    ("logistic", include_str!("../scenarios/logistic.cfg")),
    ("time_varying_diffusion", include_str!("../scenarios/time_varying_diffusion.cfg")),
    ("ball_contraction", include_str!("../scenarios/ball_contraction.cfg")),
    ("counterexample", include_str!("../scenarios/counterexample.cfg")),
    ("restart_probe_demo", include_str!("../scenarios/restart_probe_demo.cfg")),
];

pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    #[test]
    fn shipped_scenarios_parse_under_their_own_name() {
        for (name, text) in SHIPPED {
            let s = parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }
}
