//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Statistical criteria drive the `partstore` binary at 10,000 seed-pinned
//! trials; the property criterion re-checks the core invariants through the
//! library.

use std::collections::{BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine as _;
use partstore::crypto::{CryptoBackend, SymmetricKey, TestBackend};
use partstore::protocol::{DistributionConfig, MessageKind};
use partstore::sharing::{
    gf_add, gf_div, gf_inv, gf_mul, reconstruct, split, split_rates, SchemeId, Share, ThresholdSpec,
};
use partstore::simulation::{
    run_scenario, ChatSpec, Network, Population, RecoveryOptions, ScenarioConfig, SIM_PASSWORD,
};
use partstore::storage::{open_part, seal_part, Chatroom, ChatroomId, PartId, ShareScheme, StoragePart, UserId};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: &str = "10000";
const SEED: &str = "42";
const TOL: f64 = 0.05;
const DEMO_BUDGET: Duration = Duration::from_secs(10);

#[derive(Clone, Copy, Debug)]
struct Rates {
    r: f64,
    r75: f64,
    r50: f64,
    ra: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
struct Sim {
    parts: u16,
    q: u16,
    t_target: &'static str,
    unique: bool,
    ts: bool,
}

impl Sim {
    fn new(parts: u16, unique: bool, ts: bool) -> Self {
        Sim { parts, q: parts, t_target: "0.7", unique, ts }
    }
}

#[derive(Default)]
struct Runner {
    cache: HashMap<Sim, Rates>,
}

impl Runner {
    fn rates(&mut self, sim: Sim) -> Result<Rates, String> {
        if let Some(r) = self.cache.get(&sim) {
            return Ok(*r);
        }
        let started = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_partstore"))
            .args(["simulate", "--trials", TRIALS, "--seed", SEED])
            .args(["--parts", &sim.parts.to_string(), "--q", &sim.q.to_string()])
            .args(["--t-target", sim.t_target])
            .args(["--unique-peers", if sim.unique { "true" } else { "false" }])
            .args(["--ts", if sim.ts { "on" } else { "off" }])
            .env_remove("PARTSTORE_SEED")
            .output()
            .map_err(|e| format!("cannot run simulate: {e}"))?;
        if !out.status.success() {
            return Err(format!("simulate {sim:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let row = text.lines().nth(1).ok_or("simulate printed no data row")?;
        let cols: Vec<f64> = row.split(',').skip(8).map(|c| c.parse().unwrap_or(f64::NAN)).collect();
        let [r, r75, r50, _r25, ra] = cols[..] else {
            return Err(format!("malformed row {row:?}"));
        };
        eprintln!("  ran {sim:?} in {:.0?}: r={r} r75={r75} r50={r50} ra={ra}", started.elapsed());
        let rates = Rates { r, r75, r50, ra };
        self.cache.insert(sim, rates);
        Ok(rates)
    }
}

/// Accumulates failed checks and a compact record of observed values.
#[derive(Default)]
struct Verdict {
    observed: Vec<String>,
    failures: Vec<String>,
}

impl Verdict {
    fn near(&mut self, label: &str, got: f64, want: f64) {
        self.within(label, got, want - TOL, want + TOL);
    }

    fn within(&mut self, label: &str, got: f64, lo: f64, hi: f64) {
        self.observed.push(format!("{label}={got:.4}"));
        if !(lo..=hi).contains(&got) {
            self.failures.push(format!("{label}={got:.4} outside [{lo:.2}, {hi:.2}]"));
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn into_result(self) -> Result<String, String> {
        if self.failures.is_empty() {
            Ok(self.observed.join(" "))
        } else {
            Err(format!("{} (observed {})", self.failures.join("; "), self.observed.join(" ")))
        }
    }
}

fn criterion_1(run: &mut Runner) -> Result<String, String> {
    let mut v = Verdict::default();
    let ra = |run: &mut Runner, p, unique| run.rates(Sim::new(p, unique, false)).map(|x| x.ra);
    let (u1, n1) = (ra(run, 1, true)?, ra(run, 1, false)?);
    let (u2, n2) = (ra(run, 2, true)?, ra(run, 2, false)?);
    v.within("ra(p=1,unique)", u1, 0.62, 0.72);
    v.within("ra(p=1,non-unique)", n1, 0.54, 0.64);
    v.near("ra(p=2,unique)", u2, 0.82);
    v.near("ra(p=2,non-unique)", n2, 0.81);
    v.check(u2 >= n2, format!("p=2 unique {u2} below non-unique {n2}"));
    v.into_result()
}

fn criterion_2(run: &mut Runner) -> Result<String, String> {
    let mut v = Verdict::default();
    let (off2, on2) = (run.rates(Sim::new(2, false, false))?, run.rates(Sim::new(2, false, true))?);
    let (off4, on4) = (run.rates(Sim::new(4, false, false))?, run.rates(Sim::new(4, false, true))?);
    v.near("r(p=2,cts)", off2.r, 0.34);
    v.near("r(p=2,cts+ts)", on2.r, 0.69);
    v.near("r(p=4,cts)", off4.r, 0.10);
    v.near("r(p=4,cts+ts)", on4.r, 0.66);
    v.near("r50(p=2,cts)", off2.r50, 0.48);
    v.near("r50(p=2,cts+ts)", on2.r50, 0.18);
    v.into_result()
}

fn criterion_3(run: &mut Runner) -> Result<String, String> {
    let mut v = Verdict::default();
    for (p, want) in [(1, 0.73), (2, 0.75), (4, 0.72)] {
        let high = run.rates(Sim { t_target: "0.9", ..Sim::new(p, false, true) })?.r;
        let base = run.rates(Sim::new(p, false, true))?.r;
        v.near(&format!("r(p={p},t=0.9)"), high, want);
        v.check(high > base, format!("p={p}: r at t=0.9 ({high}) not above t=0.7 ({base})"));
    }
    v.into_result()
}

fn criterion_4(run: &mut Runner) -> Result<String, String> {
    let mut v = Verdict::default();
    for p in [8, 12, 16] {
        let mut partial = Vec::new();
        let mut full = Vec::new();
        for q in [p, p - 1, p - 2] {
            let x = run.rates(Sim { q, ..Sim::new(p, false, true) })?;
            full.push(x.r);
            partial.push(x.r75 + x.r50);
        }
        let drift = (full[0] - full[2]).abs();
        v.within(&format!("|dr|(p={p})"), drift, 0.0, TOL);
        v.observed.push(format!("r75+r50(p={p})={partial:.4?}"));
        v.check(
            partial.windows(2).all(|w| w[1] < w[0]),
            format!("p={p}: r75+r50 not decreasing over q=p..p-2: {partial:?}"),
        );
    }
    v.into_result()
}

fn criterion_5() -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_partstore"))
        .args(["overhead", "--parts", "4", "--peers", "70"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let field = |prefix: &str| -> Option<String> {
        text.lines().find_map(|l| l.strip_prefix(prefix)).map(|s| s.split_whitespace().next().unwrap_or("").to_owned())
    };
    let overhead = field("overhead: ").ok_or("no overhead line")?;
    let baseline = field("baseline: ").ok_or("no baseline line")?;
    let ratio: f64 = field("ratio: ").ok_or("no ratio line")?.parse().map_err(|_| "bad ratio")?;
    let mut v = Verdict::default();
    v.observed.push(format!("overhead={overhead} baseline={baseline} ratio={ratio}"));
    v.check(out.status.success(), "overhead exited nonzero");
    v.check(overhead == "10880", format!("overhead {overhead} != 10880"));
    v.check(baseline == "22800", format!("baseline {baseline} != 22800"));
    v.check(ratio < 0.5, format!("ratio {ratio} not below 0.5"));
    v.into_result()
}

fn criterion_7() -> Result<String, String> {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_partstore"))
        .args(["demo", "--crypto", "production"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let text = String::from_utf8_lossy(&out.stdout);
    let mut v = Verdict::default();
    v.observed.push(format!("elapsed={elapsed:.2?}"));
    v.check(out.status.code() == Some(0), format!("exit code {:?}", out.status.code()));
    v.check(text.contains("verdict: RECOVERED (storage"), "no identical-storage verdict");
    v.check(elapsed < DEMO_BUDGET, format!("took {elapsed:.2?}"));
    v.into_result()
}

// ---- property re-checks ----

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn interpolate_at(points: &[(u8, u8)], x: u8) -> u8 {
    let mut acc = 0;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut basis = 1;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                basis = gf_mul(basis, gf_div(x ^ xj, xi ^ xj).unwrap());
            }
        }
        acc ^= gf_mul(basis, yi);
    }
    acc
}

fn field_axioms() -> Result<(), String> {
    for a in 0..=255u8 {
        if a == 0 {
            ensure(gf_inv(0).is_none(), "0 has an inverse")?;
        } else {
            ensure(gf_mul(a, gf_inv(a).unwrap()) == 1, format!("bad inverse of {a}"))?;
        }
        for b in 0..=255u8 {
            ensure(gf_mul(a, b) == gf_mul(b, a), format!("mul not commutative at {a},{b}"))?;
            ensure(gf_add(a, b) == gf_add(b, a), "add not commutative")?;
            for c in (0..=255u8).step_by(17) {
                ensure(gf_mul(a, gf_mul(b, c)) == gf_mul(gf_mul(a, b), c), "mul not associative")?;
                ensure(gf_mul(a, gf_add(b, c)) == gf_add(gf_mul(a, b), gf_mul(a, c)), "not distributive")?;
            }
        }
    }
    Ok(())
}

fn sharing_round_trip_and_secrecy() -> Result<(), String> {
    let mut r = rng(1);
    for n in 1..=10usize {
        for t in 1..=n {
            let mut secret = vec![0u8; 24];
            r.fill_bytes(&mut secret);
            let sid = SchemeId::derive("u", "acceptance", (n * 16 + t) as u64);
            let mut shares =
                split(&secret, ThresholdSpec::new(t, n).unwrap(), sid, &mut r).map_err(|e| e.to_string())?;
            shares.rotate_left(r.next_u32() as usize % n);
            ensure(reconstruct(&shares[..t], t).ok() == Some(secret.clone()), format!("({t},{n}) round trip"))?;
            if t < 2 {
                continue;
            }
            let seen = &shares[..t - 1];
            ensure(reconstruct(seen, t).is_err(), format!("({t},{n}) accepted t-1 shares"))?;
            // Every candidate first byte stays consistent with the t-1 seen shares.
            for candidate in [0u8, 1, 0x5a, 0xff] {
                let mut points: Vec<(u8, u8)> = seen.iter().map(|s| (s.x, s.payload[0])).collect();
                points.push((0, candidate));
                let x_new = 200;
                let extra = Share { scheme_id: sid, x: x_new, payload: vec![interpolate_at(&points, x_new)] };
                let mut set: Vec<Share> =
                    seen.iter().map(|s| Share { payload: vec![s.payload[0]], ..s.clone() }).collect();
                set.push(extra);
                ensure(reconstruct(&set, t).ok() == Some(vec![candidate]), "t-1 shares pin the secret")?;
            }
        }
    }
    Ok(())
}

fn sealed_blob_round_trip() -> Result<(), String> {
    let be = TestBackend::with_iterations(2);
    let mut r = rng(2);
    let room =
        Chatroom::new(ChatroomId::new("room"), [UserId::from("u"), UserId::from("p1")], SymmetricKey::random(&mut r))
            .map_err(|e| e.to_string())?;
    let part = StoragePart::new(PartId::new("part-0"), vec![room]);
    let (k, other) = (SymmetricKey::random(&mut r), SymmetricKey::random(&mut r));
    let blob = seal_part(&be, &part, &k, &mut r).map_err(|e| e.to_string())?;
    ensure(open_part(&be, &blob, &k).ok() == Some(part), "round trip")?;
    ensure(open_part(&be, &blob, &other).is_err(), "opened under another key")
}

fn small_population() -> Population {
    let rooms: [&[&str]; 3] = [&["p1", "p2"], &["p3"], &["p1", "p4"]];
    Population {
        user: UserId::from("u"),
        peers: ["p1", "p2", "p3", "p4"].map(UserId::from).to_vec(),
        chats: rooms
            .iter()
            .enumerate()
            .map(|(i, peers)| ChatSpec {
                id: ChatroomId::new(format!("c{i}")),
                members: peers.iter().copied().chain(["u"]).map(UserId::from).collect(),
            })
            .collect(),
    }
}

fn network(seed: u64) -> Result<(Network, ChaCha8Rng), String> {
    let mut r = rng(seed);
    let backend: Arc<dyn CryptoBackend> = Arc::new(TestBackend::with_iterations(2));
    let mut net = Network::build(backend, &small_population(), 2, true, &mut r).map_err(|e| e.to_string())?;
    let config = DistributionConfig { rates: split_rates(0.5, 2, 2).unwrap(), unique_peers: true, ts_enabled: true };
    net.distribute(&config, &mut r).map_err(|e| e.to_string())?;
    Ok((net, r))
}

fn all_peers(net: &Network) -> BTreeSet<UserId> {
    net.peers.keys().cloned().collect()
}

fn gating() -> Result<(), String> {
    let (mut net, mut r) = network(3)?;
    let run =
        net.recover(&RecoveryOptions { active: all_peers(&net), confirm: false }, &mut r).map_err(|e| e.to_string())?;
    ensure(run.count(MessageKind::ShareDelivery) == 0, "shares released without confirmation")?;
    ensure(run.session.storage().is_none(), "storage recovered without confirmation")
}

fn server_blindness() -> Result<(), String> {
    let (mut net, mut r) = network(4)?;
    let mut secrets = vec![SIM_PASSWORD.to_vec(), net.account.storage_key().as_bytes().to_vec()];
    let storage = net.account.storage();
    secrets.push(storage.enc_pair.private.as_bytes().to_vec());
    secrets.push(storage.sig_pair.private.as_bytes().to_vec());
    secrets.extend(storage.part_table.iter().map(|e| e.part_key.as_bytes().to_vec()));
    for room in &net.chatrooms {
        secrets.extend(room.key_history.iter().map(|k| k.as_bytes().to_vec()));
    }
    let run =
        net.recover(&RecoveryOptions { active: all_peers(&net), confirm: true }, &mut r).map_err(|e| e.to_string())?;
    ensure(run.session.storage().is_some(), "recovery failed")?;
    let engine = base64::engine::general_purpose::STANDARD_NO_PAD;
    let held = net.server.held_byte_strings();
    for secret in &secrets {
        let encoded = engine.encode(secret);
        // The last encoded character depends on the bytes that follow.
        let encoded = &encoded.as_bytes()[..encoded.len() - 1];
        for h in &held {
            for needle in [&secret[..], encoded] {
                ensure(!h.windows(needle.len()).any(|w| w == needle), "secret found in server state")?;
            }
        }
    }
    Ok(())
}

fn route_agreement() -> Result<(), String> {
    let (mut net, mut r) = network(5)?;
    let run =
        net.recover(&RecoveryOptions { active: all_peers(&net), confirm: true }, &mut r).map_err(|e| e.to_string())?;
    let (a, b) = run.session.reconstruct_routes().map_err(|e| e.to_string())?;
    let expected = Some(net.account.storage_key().clone());
    ensure(a == expected && b == expected, "routes disagree on the storage key")
}

fn collusion() -> Result<(), String> {
    let (net, _) = network(6)?;
    let owner = UserId::from("u");
    let p_s = net.account.storage_key().as_bytes().to_vec();
    let held: Vec<_> = net.peers.values().flat_map(|p| p.held_shares_for(&owner).cloned()).collect();
    let mut schemes: Vec<ShareScheme> = held.iter().map(|h| h.scheme.clone()).collect();
    schemes.dedup();
    let part_keys: Vec<Vec<u8>> =
        net.account.storage().part_table.iter().map(|e| e.part_key.as_bytes().to_vec()).collect();
    for scheme in schemes {
        let of_scheme: Vec<_> = held.iter().filter(|h| h.scheme == scheme).collect();
        let shares: Vec<Share> = of_scheme.iter().map(|h| h.share.clone()).collect();
        let secret = reconstruct(&shares, of_scheme[0].threshold as usize).map_err(|e| e.to_string())?;
        for key in std::iter::once(&p_s).chain(&part_keys) {
            ensure(!secret.windows(key.len()).any(|w| w == &key[..]), "pooled shares expose a key")?;
        }
    }
    Ok(())
}

fn parallel_determinism() -> Result<(), String> {
    let config = ScenarioConfig { inactive_rate: 0.3, trials: 40, master_seed: 9, ..ScenarioConfig::new(2) };
    let one = run_scenario(&config, 1).map_err(|e| e.to_string())?;
    let four = run_scenario(&config, 4).map_err(|e| e.to_string())?;
    ensure(one == four, "results depend on thread count")
}

fn ensure(ok: bool, what: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.into())
    }
}

type Check = fn() -> Result<(), String>;

fn criterion_6() -> Result<String, String> {
    let checks: [(&str, Check); 9] = [
        ("field-axioms", field_axioms),
        ("sharing", sharing_round_trip_and_secrecy),
        ("sealed-blobs", sealed_blob_round_trip),
        ("gating", gating),
        ("server-blindness", server_blindness),
        ("route-agreement", route_agreement),
        ("collusion", collusion),
        ("parallel-determinism", parallel_determinism),
        ("gating-random", || {
            for seed in 10..14 {
                gating_on(seed)?;
            }
            Ok(())
        }),
    ];
    let mut failures = Vec::new();
    for (name, check) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        if let Err(e) = outcome {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        Ok(format!("{} checks", checks.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn gating_on(seed: u64) -> Result<(), String> {
    use partstore::simulation::{generate_population, PopulationSpec};
    let mut r = rng(seed);
    let pop = generate_population(&PopulationSpec { n_chats: 8, peer_pool: 12, ..PopulationSpec::default() }, &mut r)
        .map_err(|e| e.to_string())?;
    let backend: Arc<dyn CryptoBackend> = Arc::new(TestBackend::with_iterations(2));
    let mut net = Network::build(backend, &pop, 2, false, &mut r).map_err(|e| e.to_string())?;
    let config = DistributionConfig { rates: split_rates(0.7, 2, 2).unwrap(), unique_peers: false, ts_enabled: true };
    net.distribute(&config, &mut r).map_err(|e| e.to_string())?;
    let run = net
        .recover(&RecoveryOptions { active: pop.peers.iter().cloned().collect(), confirm: false }, &mut r)
        .map_err(|e| e.to_string())?;
    ensure(run.count(MessageKind::ShareDelivery) == 0, format!("seed {seed}: shares without confirmation"))
}

fn report(n: u8, title: &str, outcome: Result<String, String>) -> bool {
    match outcome {
        Ok(detail) => {
            println!("PASS criterion {n} ({title}): {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL criterion {n} ({title}): {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let mut run = Runner::default();
    let results = [
        report(5, "storage overhead", criterion_5()),
        report(7, "end-to-end demo", criterion_7()),
        report(6, "property suites", criterion_6()),
        report(1, "unique vs non-unique peers", criterion_1(&mut run)),
        report(2, "threshold secret sharing gain", criterion_2(&mut run)),
        report(3, "higher t_target", criterion_3(&mut run)),
        report(4, "fewer parts needed for storage", criterion_4(&mut run)),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
