use lembill::algebra::{centered_lift, encode_signed, field_byte_len, Fq, SignedBound};
use lembill::mpc::program::{random_program, run_program};
use lembill::mpc::{Engine, IdealEngine, ReplicatedEngine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn engines_agree_on_random_programs() {
    let bound = SignedBound::new::<Fq>(64).unwrap();
    let wide = SignedBound::new::<Fq>(126).unwrap();
    let mut gen = ChaCha20Rng::seed_from_u64(2024);
    for i in 0..200u64 {
        let program = random_program::<Fq>(&mut gen, 24, bound);
        let mut ideal = IdealEngine::new(i);
        let mut repl = ReplicatedEngine::<Fq>::new(i, i ^ 0xabc);
        let a = run_program::<Fq, _>(&mut ideal, &program, &mut ChaCha20Rng::seed_from_u64(i)).unwrap();
        let b = run_program::<Fq, _>(&mut repl, &program, &mut ChaCha20Rng::seed_from_u64(i + 1)).unwrap();
        assert_eq!(a, b, "program {i}");
        let lifted: Vec<i128> = b.iter().map(|x| centered_lift(*x, wide).unwrap()).collect();
        assert_eq!(lifted, program.expected, "program {i}");
        assert_eq!(Engine::<Fq>::stats(&ideal).comparisons, repl.stats().comparisons);
        assert_eq!(Engine::<Fq>::stats(&ideal).multiplications, repl.stats().multiplications);
    }
}

#[test]
fn one_element_per_party_per_gate() {
    let w = field_byte_len::<Fq>() as u64;
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut engine = ReplicatedEngine::<Fq>::new(1, 2);
    let mut regs = Vec::new();
    for _ in 0..4 {
        let x: i64 = rng.gen_range(-100..100);
        let shares = ReplicatedEngine::<Fq>::deal(encode_signed(x as i128), &mut rng);
        regs.push(engine.join(&shares).unwrap());
    }
    let mut gates = 0u64;
    for round in 1..=5 {
        let pairs: Vec<_> = (0..round).map(|k| (regs[k % 4].clone(), regs[(k + 1) % 4].clone())).collect();
        engine.mul_many(&pairs).unwrap();
        gates += round as u64;
        let online = &engine.stats().online;
        assert_eq!(online.total_bytes(), 3 * w * gates);
        for p in 0..3 {
            assert_eq!(online.bytes_sent_by(p), w * gates);
        }
    }
    assert_eq!(engine.stats().online.mul_gates, gates);
    assert_eq!(engine.stats().online.rounds, 5);
}
