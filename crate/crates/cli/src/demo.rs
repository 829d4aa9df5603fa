use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Args;
use partstore::crypto::{BackendKind, CryptoBackend};
use partstore::protocol::{
    DistributionConfig, MessageKind, ProtocolMessage, RecoveryConfirmedBody, ShareDeliveryBody, SystemMessageBody,
};
use partstore::sharing::split_rates;
use partstore::simulation::{ChatSpec, Network, Population, RecoveryOptions};
use partstore::storage::{ChatroomId, UserId};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{usage_error, Crypto};

const PARTS: usize = 2;
const T_TARGET: f64 = 0.5;

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// Peers that never answer: `all`, `none` or a comma-separated list such as `p2,p3`.
    #[arg(long, default_value = "none")]
    inactive: String,
    /// Do not send RecoveryConfirmed; peers keep withholding their shares.
    #[arg(long)]
    skip_confirmation: bool,
    #[arg(long, value_enum, default_value_t = Crypto::Production)]
    crypto: Crypto,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// User `u` with chats {u,p1,p2}, {u,p3}, {u,p1,p4}.
fn population() -> Population {
    let rooms: [&[&str]; 3] = [&["p1", "p2"], &["p3"], &["p1", "p4"]];
    let chats = rooms
        .iter()
        .enumerate()
        .map(|(i, peers)| ChatSpec {
            id: ChatroomId::new(format!("chat-{}", i + 1)),
            members: peers.iter().copied().chain(["u"]).map(UserId::from).collect(),
        })
        .collect();
    Population { user: UserId::from("u"), peers: ["p1", "p2", "p3", "p4"].map(UserId::from).to_vec(), chats }
}

fn inactive_set(spec: &str, peers: &[UserId]) -> BTreeSet<UserId> {
    match spec.trim() {
        "none" | "" => BTreeSet::new(),
        "all" => peers.iter().cloned().collect(),
        list => list
            .split(',')
            .map(|name| {
                let id = UserId::from(name.trim());
                if !peers.contains(&id) {
                    usage_error(format!("--inactive: unknown peer {name:?} (expected one of p1..p4, all, none)"));
                }
                id
            })
            .collect(),
    }
}

fn describe(msg: &ProtocolMessage) -> String {
    let detail = match msg.kind {
        MessageKind::ShareDelivery => msg
            .decode_body::<ShareDeliveryBody>()
            .map(|b| format!("{} share, epoch {}, threshold {}", b.scheme.tag(), b.epoch, b.threshold))
            .unwrap_or_default(),
        MessageKind::SystemMessage => msg
            .decode_body::<SystemMessageBody>()
            .map(|b| format!("encrypted audit record in {}", b.chatroom))
            .unwrap_or_default(),
        MessageKind::RecoveryConfirmed => msg
            .decode_body::<RecoveryConfirmedBody>()
            .map(|b| format!("countersigns recovery of {}", b.owner))
            .unwrap_or_default(),
        _ => String::new(),
    };
    let rid = if msg.rid.is_none() { "-".to_owned() } else { msg.rid.as_str()[..8].to_owned() };
    format!(
        "{:<18} {:>6} -> {:<6} rid {:<8} {detail}",
        msg.kind.as_str(),
        msg.sender.as_str(),
        msg.recipient.as_str(),
        rid
    )
}

fn print_trace(messages: &[ProtocolMessage]) {
    for (i, msg) in messages.iter().enumerate() {
        println!("{:>3}  {}", i + 1, describe(msg).trim_end());
    }
}

pub fn run(args: DemoArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let pop = population();
    let inactive = inactive_set(&args.inactive, &pop.peers);
    let backend: Arc<dyn CryptoBackend> = Arc::from(BackendKind::from(args.crypto).backend());
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    println!("population: user u, peers p1..p4");
    for chat in &pop.chats {
        let members: Vec<&str> = chat.members.iter().map(UserId::as_str).collect();
        println!("  {}: {{{}}}", chat.id, members.join(", "));
    }
    let mut net = Network::build(backend, &pop, PARTS, true, &mut rng)?;
    let config =
        DistributionConfig { rates: split_rates(T_TARGET, PARTS, PARTS)?, unique_peers: true, ts_enabled: true };
    net.distribute(&config, &mut rng)?;
    println!("\n== distribution ({PARTS} parts, t_target {T_TARGET}) ==");
    print_trace(net.server.transcript());

    let active: BTreeSet<UserId> = pop.peers.iter().filter(|p| !inactive.contains(*p)).cloned().collect();
    let names = |set: &BTreeSet<UserId>| set.iter().map(UserId::as_str).collect::<Vec<_>>().join(",");
    println!(
        "\n== recovery (inactive: {}, confirmation: {}) ==",
        if inactive.is_empty() { "none".to_owned() } else { names(&inactive) },
        if args.skip_confirmation { "skipped" } else { "by first active peer" }
    );
    let run = net.recover(&RecoveryOptions { active, confirm: !args.skip_confirmation }, &mut rng)?;
    print_trace(&run.trace);

    let withholding = net.peers.values().filter(|p| p.has_pending()).count();
    if withholding > 0 {
        println!("\n{withholding} peer(s) withholding shares: no RecoveryConfirmed for this recovery");
    }
    let recovered_parts = run.session.recovered_parts().len();
    if run.session.storage().is_none() {
        println!("verdict: NOT RECOVERED ({recovered_parts}/{PARTS} parts)");
        return Ok(ExitCode::FAILURE);
    }
    let (storage, parts, _) = run.session.into_recovered()?;
    if storage == *net.account.storage() && parts == net.account.parts() {
        println!("verdict: RECOVERED (storage and {} parts identical to the original)", parts.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verdict: RECOVERED BUT DIFFERENT from the original storage");
        Ok(ExitCode::FAILURE)
    }
}
