use hris::agents::checkpoint;
use hris::{
    Agent64, AgentConfig64, AttackConfig, Decision, DefenseConfig, Env32, Env64, EnvAction, EnvConfig, EnvConfig64, RewardPipeline64,
    SacConfig, Transition,
};

fn small_sac() -> AgentConfig64 {
    AgentConfig64::Sac(SacConfig {
        hidden: vec![16, 16],
        batch: 8,
        warmup_steps: 50,
        ..SacConfig::default()
    })
}

/// Agent, env and pipeline advanced together for `steps`, returning the
/// reward trace.
fn advance(env: &mut Env64, agent: &mut Agent64, pipe: &mut RewardPipeline64, from: u64, steps: u64) -> Vec<f64> {
    let mut rewards = Vec::new();
    let mut obs = env.observation();
    for t in from..from + steps {
        let x = env.normalize(&obs);
        let a = agent.act(&x, t).unwrap();
        let out = env.step(&EnvAction(a.clone())).unwrap();
        let rec = pipe.process(out.reward);
        if let Some(r) = rec.decision.accepted() {
            let next_obs = env.normalize(&out.observation);
            agent.remember(Transition {
                obs: x,
                action: a,
                reward: r,
                next_obs,
                step: t,
            });
        }
        agent.learn(t).unwrap();
        rewards.push(out.reward);
        obs = out.observation;
    }
    rewards
}

#[test]
fn checkpointed_loop_continues_bit_identically() {
    let mut env = Env64::new(EnvConfig64 {
        seed: 4,
        ..EnvConfig64::default()
    })
    .unwrap();
    let mut agent = Agent64::new(&small_sac(), env.obs_dim(), env.action_dim(), 4).unwrap();
    let mut pipe = RewardPipeline64::new(Some(AttackConfig::default()), Some(DefenseConfig::default()), 4).unwrap();
    advance(&mut env, &mut agent, &mut pipe, 0, 150);

    let bytes = checkpoint::encode(&(&env, &agent, &pipe)).unwrap();
    let (mut env2, mut agent2, mut pipe2): (Env64, Agent64, RewardPipeline64) = checkpoint::decode(&bytes).unwrap();

    let a = advance(&mut env, &mut agent, &mut pipe, 150, 150);
    let b = advance(&mut env2, &mut agent2, &mut pipe2, 150, 150);
    assert_eq!(
        a.iter().map(|r| r.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|r| r.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(checkpoint::encode(&agent).unwrap(), checkpoint::encode(&agent2).unwrap());
}

#[test]
fn checkpoint_rejects_foreign_and_future_headers() {
    let mut bytes = checkpoint::encode(&1u32).unwrap();
    bytes[8] = 2;
    assert!(checkpoint::decode::<u32>(&bytes).is_err());
    assert!(checkpoint::decode::<u32>(b"NOTACKPT\x01\0\0\0").is_err());
}

#[test]
fn single_and_double_precision_envs_agree() {
    let mut e64 = Env64::new(EnvConfig64 {
        seed: 11,
        ..EnvConfig64::default()
    })
    .unwrap();
    let mut e32 = Env32::new(EnvConfig::<f32> {
        seed: 11,
        ..EnvConfig::default()
    })
    .unwrap();
    let action: Vec<f64> = (0..e64.action_dim()).map(|i| ((i as f64) * 0.37).sin()).collect();
    for _ in 0..20 {
        let o64 = e64.step(&EnvAction(action.clone())).unwrap();
        let o32 = e32.step(&EnvAction(action.iter().map(|&x| x as f32).collect())).unwrap();
        assert_eq!(o64.info.resolved_mode, o32.info.resolved_mode);
        let (a, b) = (o64.info.sum_rate, o32.info.sum_rate as f64);
        assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn poisoned_reward_is_discarded_once_statistics_are_warm() {
    let attack = AttackConfig {
        threshold: 0.5,
        trigger_window: 5,
        ..AttackConfig::default()
    };
    let defense = DefenseConfig {
        warmup_count: 10,
        ..DefenseConfig::default()
    };
    let mut pipe = RewardPipeline64::new(Some(attack), Some(defense), 0).unwrap();
    // Clean warm-up around 1.1 with a small spread.
    for k in 0..10 {
        let rec = pipe.process(1.1 + if k % 2 == 0 { 0.1 } else { -0.1 });
        assert!(!rec.triggered);
        assert!(matches!(rec.decision, Decision::Accepted(_)));
    }
    let rec = pipe.process(1.2);
    assert!(rec.triggered);
    assert_eq!(rec.post_attack, -1.2);
    assert_eq!(rec.decision, Decision::Discarded);
}

#[test]
fn random_agent_respects_the_power_cap_every_step() {
    let mut env = Env64::new(EnvConfig64 {
        seed: 2,
        ..EnvConfig64::default()
    })
    .unwrap();
    let mut agent = Agent64::new(&AgentConfig64::Random, env.obs_dim(), env.action_dim(), 2).unwrap();
    for t in 0..2000 {
        let x = env.normalize(&env.observation());
        let out = env.step(&EnvAction(agent.act(&x, t).unwrap())).unwrap();
        assert!(out.info.tx_power <= out.info.cap + 1e-9);
        assert!(out.reward <= out.info.sum_rate);
    }
}
