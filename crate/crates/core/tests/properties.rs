mod common;

use proptest::prelude::*;

fn check(r: common::Check) -> Result<(), TestCaseError> {
    r.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn liouvillian_preserves_trace(seed in any::<u64>(), d in 2usize..=4) {
        check(common::trace_preservation(seed, d))?;
    }

    #[test]
    fn charge_resolved_states_stay_hermitian(seed in any::<u64>(), d in 2usize..=3) {
        check(common::hermiticity(seed, d))?;
    }

    #[test]
    fn charge_resolved_states_stay_positive(seed in any::<u64>(), d in 2usize..=3, t in 0.05f64..4.0) {
        check(common::positivity(seed, d, t))?;
    }

    #[test]
    fn drazin_inverse_identities_hold(seed in any::<u64>(), d in 2usize..=4) {
        check(common::drazin_identities(seed, d))?;
    }

    #[test]
    fn split_liouvillian_recombines(seed in any::<u64>(), d in 2usize..=4) {
        check(common::liouvillian_split(seed, d))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn survival_is_monotone_and_ledger_closes(
        gamma in 0.5f64..2.0,
        omega in 0.2f64..2.0,
        nbar in 0.0f64..1.0,
        threshold in 1i64..5,
    ) {
        check(common::survival_and_ledger(gamma, omega, nbar, threshold))?;
    }

    #[test]
    fn trajectories_reproduce_from_seed(seed in any::<u64>(), diffusive in any::<bool>()) {
        check(common::seed_reproducibility(seed, diffusive))?;
    }
}
