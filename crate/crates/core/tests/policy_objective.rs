use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfpo::gradcheck::check_gradient;
use sfpo::{
    make_task, normalize_advantages, sample_rollouts, FnOracle, GrpoObjective, GrpoOracle, ParameterVector,
    Prompt, SamplingConfig, TaskKnobs, ToyPolicy,
};

fn random_theta(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> ParameterVector {
    ParameterVector::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect())
}

fn digit_prompt(a: u32, b: u32) -> Prompt {
    Prompt { id: a * 10 + b, tokens: vec![a, b] }
}

#[test]
fn distributions_normalise_and_scores_average_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bandit = ToyPolicy::softmax_bandit(3, 7).unwrap();
    let seq = ToyPolicy::linear_seq(9).unwrap();
    for _ in 0..50 {
        for (policy, prompt, prefix) in [
            (&bandit, Prompt { id: 2, tokens: vec![2] }, vec![]),
            (&seq, digit_prompt(8, 9), vec![1]),
            (&seq, digit_prompt(3, 4), vec![]),
        ] {
            let theta = random_theta(&mut rng, policy.param_dim(), 3.0);
            let lp = policy.log_probs(&theta, &prompt, &prefix);
            let total: f64 = lp.iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() <= 1e-12);
            assert!(lp.iter().all(|l| l.is_finite()));

            // sum_a p(a) grad log p(a) over the last position of prefix + [a]
            let mut expected = vec![0.0; policy.param_dim()];
            for (a, l) in lp.iter().enumerate() {
                let mut response = prefix.clone();
                response.push(a as u32);
                if policy.eos() == Some(a as u32) || response.len() == policy.max_len() || policy.eos().is_none() {
                    let (_, scores) = policy.logprob_and_grad(&theta, &prompt, &response).unwrap();
                    let last = scores.last().unwrap();
                    for (e, s) in expected.iter_mut().zip(last.as_slice()) {
                        *e += l.exp() * s;
                    }
                } else {
                    let mut with_eos = response.clone();
                    with_eos.push(policy.eos().unwrap());
                    let (_, scores) = policy.logprob_and_grad(&theta, &prompt, &with_eos).unwrap();
                    for (e, s) in expected.iter_mut().zip(scores[prefix.len()].as_slice()) {
                        *e += l.exp() * s;
                    }
                }
            }
            assert!(expected.iter().all(|v| v.abs() <= 1e-12), "{expected:?}");
        }
    }
}

#[test]
fn uniform_bandit_logprob() {
    let policy = ToyPolicy::softmax_bandit(2, 4).unwrap();
    let theta = ParameterVector::zeros(policy.param_dim());
    for a in 0..4 {
        let (lp, _) = policy.logprob_and_grad(&theta, &Prompt { id: 0, tokens: vec![1] }, &[a]).unwrap();
        assert!((lp[0] + 4f64.ln()).abs() < 1e-15);
    }
    assert!(policy.logprob_and_grad(&theta, &Prompt { id: 0, tokens: vec![1] }, &[4]).is_err());
}

#[test]
fn logprob_scores_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bandit = ToyPolicy::softmax_bandit(3, 5).unwrap();
    let seq = ToyPolicy::linear_seq(5).unwrap();
    for i in 0..40 {
        let (policy, prompt, response) = if i % 2 == 0 {
            (&bandit, Prompt { id: 0, tokens: vec![rng.random_range(0..3)] }, vec![rng.random_range(0..5)])
        } else {
            let (a, b) = (rng.random_range(0..=5), rng.random_range(0..=5));
            let sum = a + b;
            let response = if sum >= 10 { vec![1, sum - 10, 10] } else { vec![sum, 10] };
            (&seq, digit_prompt(a, b), response)
        };
        let theta = random_theta(&mut rng, policy.param_dim(), 1.0);
        let (_, scores) = policy.logprob_and_grad(&theta, &prompt, &response).unwrap();
        for (t, score) in scores.iter().enumerate() {
            let (p, r) = (prompt.clone(), response.clone());
            let oracle = FnOracle::new(
                move |th: &ParameterVector| policy.logprob_and_grad(th, &p, &r).unwrap().0[t],
                |th: &ParameterVector| ParameterVector::zeros(th.dim()),
            );
            let numeric = sfpo::gradcheck::numeric_gradient::<(), _>(&oracle, &theta, &(), 1e-5).unwrap();
            let err = score.sub(&numeric).norm() / score.norm().max(numeric.norm()).max(1e-8);
            assert!(err <= 1e-6, "instance {i} position {t}: {err}");
        }
    }
}

#[test]
fn objective_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in ["group_bandit", "digit_sum"] {
        for i in 0..25 {
            let knobs = TaskKnobs { contexts: 3, arms: 6, max_digit: 4 };
            let task = make_task(kind, &knobs, i).unwrap();
            let policy = ToyPolicy::for_task(&task);
            let theta_old = random_theta(&mut rng, policy.param_dim(), 1.0);
            let mut batch =
                sample_rollouts(&policy, &theta_old, &task, 3, 4, SamplingConfig { temperature: 1.0, top_p: 1.0 }, i)
                    .unwrap();
            let kl_coeff = if i % 2 == 0 { 0.0 } else { 0.1 };
            if kl_coeff > 0.0 {
                batch.attach_reference(&policy, &random_theta(&mut rng, policy.param_dim(), 1.0)).unwrap();
            }
            let oracle = GrpoOracle { policy: &policy, objective: GrpoObjective { kl_coeff, ..GrpoObjective::default() } };
            let mut theta = theta_old.clone();
            theta.axpy(1.0, &random_theta(&mut rng, policy.param_dim(), 0.3));
            let check = check_gradient(&oracle, &theta, &batch, 1e-6, 1e-8).unwrap();
            assert!(check.relative_error <= 1e-5, "{kind} {i}: {}", check.relative_error);
        }
    }
}

#[test]
fn ancestral_sampling_matches_probabilities() {
    let policy = ToyPolicy::softmax_bandit(1, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta = random_theta(&mut rng, policy.param_dim(), 1.5);
    let prompt = Prompt { id: 0, tokens: vec![0] };
    let probs: Vec<f64> = policy.log_probs(&theta, &prompt, &[]).iter().map(|l| l.exp()).collect();
    let n = 100_000;
    let mut counts = vec![0usize; 6];
    for _ in 0..n {
        let (tokens, _) = policy.sample_response(&theta, &prompt, 1.0, 1.0, &mut rng);
        counts[tokens[0] as usize] += 1;
    }
    for (c, p) in counts.iter().zip(&probs) {
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - mean).abs() <= 3.0 * sd, "count {c}, expected {mean:.0} +/- {sd:.0}");
    }
}

#[test]
fn nucleus_sampling_matches_truncated_distribution() {
    let policy = ToyPolicy::softmax_bandit(1, 5).unwrap();
    let theta = ParameterVector::new(vec![1.2, 0.4, 0.0, -0.3, 0.9]);
    let prompt = Prompt { id: 0, tokens: vec![0] };
    let (temperature, top_p) = (0.8, 0.7);
    // independent oracle: temperature softmax, keep the smallest top set reaching top_p
    let scaled: Vec<f64> = theta.as_slice().iter().map(|z| (z / temperature).exp()).collect();
    let z: f64 = scaled.iter().sum();
    let p: Vec<f64> = scaled.iter().map(|s| s / z).collect();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| p[j].partial_cmp(&p[i]).unwrap());
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for &i in &order {
        kept.push(i);
        mass += p[i];
        if mass >= top_p {
            break;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut counts = vec![0usize; 5];
    let base: Vec<f64> = policy.log_probs(&theta, &prompt, &[]);
    for _ in 0..n {
        let (tokens, lp) = policy.sample_response(&theta, &prompt, temperature, top_p, &mut rng);
        assert_eq!(lp[0], base[tokens[0] as usize]);
        counts[tokens[0] as usize] += 1;
    }
    for i in 0..5 {
        let q = if kept.contains(&i) { p[i] / mass } else { 0.0 };
        let mean = n as f64 * q;
        let sd = (n as f64 * q * (1.0 - q)).sqrt();
        assert!((counts[i] as f64 - mean).abs() <= 3.0 * sd, "arm {i}: {} vs {mean:.0}", counts[i]);
    }
}

#[test]
fn one_hot_policy_repeats_itself() {
    let task = make_task("group_bandit", &TaskKnobs { contexts: 1, arms: 4, max_digit: 9 }, 0).unwrap();
    let policy = ToyPolicy::for_task(&task);
    let theta = ParameterVector::new(vec![0.0, 0.0, 800.0, 0.0]);
    let batch = sample_rollouts(&policy, &theta, &task, 2, 5, SamplingConfig::default(), 9).unwrap();
    for g in &batch.groups {
        for r in &g.responses {
            assert_eq!(r.tokens, vec![2]);
            assert_eq!(r.old_logprobs, vec![0.0]);
        }
    }
}

#[test]
fn same_seed_same_batch() {
    let task = make_task("digit_sum", &TaskKnobs::default(), 3).unwrap();
    let policy = ToyPolicy::for_task(&task);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let theta = random_theta(&mut rng, policy.param_dim(), 1.0);
    let s = SamplingConfig::default();
    let a = sample_rollouts(&policy, &theta, &task, 8, 4, s, 42).unwrap();
    let b = sample_rollouts(&policy, &theta, &task, 8, 4, s, 42).unwrap();
    let c = sample_rollouts(&policy, &theta, &task, 8, 4, s, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn every_prompt_has_a_rewarded_answer() {
    for kind in ["group_bandit", "digit_sum"] {
        let task = make_task(kind, &TaskKnobs::default(), 11).unwrap();
        for p in task.all_prompts() {
            assert_eq!(task.reward(&p, &task.correct_response(&p)), 1.0);
        }
    }
    let task = make_task("digit_sum", &TaskKnobs::default(), 0).unwrap();
    assert_eq!(task.correct_response(&digit_prompt(3, 4)), vec![7, 10]);
    assert_eq!(task.correct_response(&digit_prompt(8, 9)), vec![1, 7, 10]);
    assert!(make_task("chess", &TaskKnobs::default(), 0).is_err());
}

#[test]
fn uniform_policy_earns_chance_reward() {
    let task = make_task("group_bandit", &TaskKnobs { contexts: 2, arms: 8, max_digit: 9 }, 1).unwrap();
    let policy = ToyPolicy::for_task(&task);
    let theta = ParameterVector::zeros(policy.param_dim());
    let batch = sample_rollouts(&policy, &theta, &task, 500, 8, SamplingConfig { temperature: 1.0, top_p: 1.0 }, 2)
        .unwrap();
    let n = 4000.0_f64;
    let sd = (0.125 * 0.875 / n).sqrt();
    assert!((batch.mean_reward() - 0.125).abs() <= 3.0 * sd);
}

proptest! {
    #[test]
    fn advantages_are_standardised(group in prop::collection::vec(-5.0..5.0f64, 2..20)) {
        prop_assume!(group.iter().any(|&r| r != group[0]));
        let adv = normalize_advantages(&[group.clone()], 1e-8).unwrap().values.remove(0);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((std - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn advantages_ignore_shift_and_scale(
        group in prop::collection::vec(-5.0..5.0f64, 2..20),
        shift in -100.0..100.0f64,
        scale in 0.01..100.0f64,
    ) {
        let a = normalize_advantages(&[group.clone()], 1e-8).unwrap().values.remove(0);
        let moved: Vec<f64> = group.iter().map(|r| scale * r + shift).collect();
        let b = normalize_advantages(&[moved], 1e-8).unwrap().values.remove(0);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn flat_groups_get_zero(value in -5.0..5.0f64, size in 2usize..20) {
        let adv = normalize_advantages(&[vec![value; size]], 1e-8).unwrap().values.remove(0);
        prop_assert!(adv.iter().all(|&a| a == 0.0));
    }
}
