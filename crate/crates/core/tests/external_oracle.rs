use std::time::{Duration, Instant};

use fakewake::oracle::{estimate_wake_rate, ExternalOracle, OracleError, WakeOracle};

fn stub(reply: &str) -> ExternalOracle {
    let cmd = format!("while read -r w; do echo '{reply}'; done");
    ExternalOracle::spawn(&cmd, Duration::from_secs(5)).unwrap()
}

#[test]
fn replies_one_and_zero() {
    assert!(stub("1").query("alexa").unwrap());
    assert!(!stub("0").query("alexa").unwrap());
    assert_eq!(estimate_wake_rate(&stub("1"), "olexa", 10).unwrap().positives, 10);
}

#[test]
fn other_replies_are_protocol_errors() {
    match stub("yes").query("alexa") {
        Err(OracleError::Protocol(line)) => assert_eq!(line, "yes"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn word_reaches_the_process() {
    let o = ExternalOracle::spawn(
        r#"while read -r w; do if [ "$w" = "xiǎo dù xiǎo dù" ]; then echo 1; else echo 0; fi; done"#,
        Duration::from_secs(5),
    )
    .unwrap();
    assert!(o.query("xiǎo dù xiǎo dù").unwrap());
    assert!(!o.query("xiǎo dū xiǎo dū").unwrap());
    assert!(o.describe().starts_with("exec:"));
}

#[test]
fn silent_process_times_out() {
    let o = ExternalOracle::spawn("while read -r w; do :; done", Duration::from_millis(200)).unwrap();
    let t = Instant::now();
    assert!(matches!(o.query("alexa"), Err(OracleError::Timeout(_))));
    assert!(t.elapsed() < Duration::from_secs(5));
}

#[test]
fn exited_process_is_reported() {
    let o = ExternalOracle::spawn("exit 0", Duration::from_secs(5)).unwrap();
    std::thread::sleep(Duration::from_millis(100));
    assert!(o.query("alexa").is_err());
}
