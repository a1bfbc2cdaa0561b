use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const KEY: &str = "000102030405060708090a0b0c0d0e0f";

fn drablocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drablocus"))
        .args(args)
        .env_remove("DRABLOCUS_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn vectors_pass_and_detect_corruption() {
    let o = drablocus(&["vectors"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 8);

    let o = drablocus(&["vectors", "--corrupt-sbox"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL sim"));

    // the reference engine never reads the table images
    let o = drablocus(&["vectors", "--engine", "ref", "--corrupt-sbox"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("sim"));
}

#[test]
fn encrypt_known_answer_and_round_trip_on_both_engines() {
    let dir = tempfile::tempdir().unwrap();
    let pt = dir.path().join("pt.bin");
    fs::write(&pt, 0x00112233445566778899aabbccddeeffu128.to_be_bytes()).unwrap();
    for engine in ["ref", "sim"] {
        let ct = dir.path().join(format!("ct-{engine}.bin"));
        let back = dir.path().join(format!("back-{engine}.bin"));
        let o = drablocus(&["encrypt", "--key", KEY, "--in", p(&pt), "--out", p(&ct), "--engine", engine]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(fs::read(&ct).unwrap(), 0x69c4e0d86a7b0430d8cdb78070b4c55au128.to_be_bytes());
        let o = drablocus(&["decrypt", "--key", KEY, "--in", p(&ct), "--out", p(&back), "--engine", engine]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(fs::read(&back).unwrap(), fs::read(&pt).unwrap());
    }
}

#[test]
fn engines_agree_on_a_multi_block_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bin");
    let data: Vec<u8> = (0..16 * 40).map(|i| (i * 37 % 251) as u8).collect();
    fs::write(&input, &data).unwrap();
    for op in ["encrypt", "decrypt"] {
        let a = dir.path().join(format!("{op}-ref"));
        let b = dir.path().join(format!("{op}-sim"));
        assert!(drablocus(&[op, "--key", KEY, "--in", p(&input), "--out", p(&a)]).status.success());
        assert!(drablocus(&[op, "--key", KEY, "--in", p(&input), "--out", p(&b), "--engine", "sim"]).status.success());
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{op}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let odd = dir.path().join("odd.bin");
    fs::write(&odd, [0u8; 17]).unwrap();
    let out = dir.path().join("x");
    let o = drablocus(&["encrypt", "--key", KEY, "--in", p(&odd), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("17 bytes, not a multiple of 16"), "{}", stderr(&o));

    let o = drablocus(&["encrypt", "--key", "0011", "--in", p(&odd), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad key"));

    assert_eq!(drablocus(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(drablocus(&["colocate", "--accel", "Video"]).status.code(), Some(2));
}

#[test]
fn key_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let pt = dir.path().join("pt.bin");
    let ct = dir.path().join("ct.bin");
    fs::write(&pt, 0x00112233445566778899aabbccddeeffu128.to_be_bytes()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_drablocus"))
        .args(["encrypt", "--in", p(&pt), "--out", p(&ct)])
        .env("DRABLOCUS_KEY", KEY)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&ct).unwrap(), 0x69c4e0d86a7b0430d8cdb78070b4c55au128.to_be_bytes());
}

fn write_jobs(path: &Path, n: usize) {
    let mut text = String::from("# seq mode block\n");
    for i in 0..n {
        let mode = if i % 3 == 0 { "dec" } else { "enc" };
        text.push_str(&format!("{i} {mode} {:032x}\n", (i as u128) * 0x0101_0101_0101_0101_0101_0101_0101_0101));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn simulate_reports_latency_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.txt");
    let trace = dir.path().join("trace.txt");
    let out = dir.path().join("out.txt");
    write_jobs(&jobs, 24);
    let o = drablocus(&["simulate", "--key", KEY, "--jobs", p(&jobs), "--trace", p(&trace), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("latency min=115 max=115"), "{s}");
    assert!(s.contains("max_in_flight=12"), "{s}");
    assert!(s.contains("cadence not measured"), "{s}");
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 24);
    let t = fs::read_to_string(&trace).unwrap();
    assert!(t.lines().next().unwrap().starts_with("cycle=0 ctrl fsm="));
    assert!(t.contains("stage=F1"));

    // same inputs, same trace
    let trace2 = dir.path().join("trace2.txt");
    drablocus(&["simulate", "--key", KEY, "--jobs", p(&jobs), "--trace", p(&trace2), "--out", p(&out)]);
    assert_eq!(fs::read(&trace).unwrap(), fs::read(&trace2).unwrap());
}

#[test]
fn simulate_shards_job_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    write_jobs(&a, 36);
    write_jobs(&b, 5);
    let o = drablocus(&["simulate", "--key", KEY, "--jobs", p(&a), "--jobs", p(&b)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| !l.starts_with('#')).count(), 41);
    assert!(s.contains("cadence 12 blocks / 120 cycles = 0.10000"), "{s}");
    assert_eq!(s.matches("# summary").count(), 2);

    let o = drablocus(&["simulate", "--key", KEY, "--jobs", p(&a), "--jobs", p(&b), "--trace", p(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_parse_error_cites_line() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.txt");
    fs::write(&jobs, format!("0 enc {KEY}\n1 sideways {KEY}\n")).unwrap();
    let o = drablocus(&["simulate", "--key", KEY, "--jobs", p(&jobs)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn colocate_rows() {
    let o = drablocus(&["colocate", "--accel", "Video", "--aes", "DRAB-LOCUS"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "4675 19 176 feasible");

    let o = drablocus(&["colocate", "--accel", "DNN 1", "--aes", "AES-EncDec"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "-3286 -394 -126 infeasible");

    let o = drablocus(&["colocate", "--accel", "Video", "--aes", "AES-Nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("DRAB-LOCUS"), "alternatives listed: {}", stderr(&o));

    let o = drablocus(&["colocate", "--all"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("DNN 3")));
}

#[test]
fn metrics_tables_and_jsonl() {
    let o = drablocus(&["metrics"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for needle in ["Resources and performance", "220.47", "195.97", "7.47 (computed)", "622.17 (catalog)", "Co-location"] {
        assert!(s.contains(needle), "missing {needle}:\n{s}");
    }

    let o = drablocus(&["metrics", "--format", "jsonl", "--design", "AES-Efficient"]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        assert!(line.starts_with("{\"table\":"), "{line}");
        assert!(line.contains("AES-Efficient"), "{line}");
    }

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[device]]\nname = \"x\"\nslices = 1\nbogus = 2\n").unwrap();
    let o = drablocus(&["metrics", "--catalog", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn dump_tables() {
    let o = drablocus(&["dump-tables", "sbox"]);
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 512);
    assert_eq!(s.lines().next(), Some("63"));
    assert_eq!(s.lines().nth(256), Some("52"));

    let o = drablocus(&["dump-tables", "mix-columns"]);
    assert_eq!(stdout(&o).lines().nth(1), Some("02010103"));

    let o = drablocus(&["dump-tables", "key-store", "--key", KEY]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines[0], KEY);
    assert_eq!(lines[10], "13111d7fe3944a17f307a78b4d2b30c5");
    assert_eq!(drablocus(&["dump-tables", "key-store"]).status.code(), Some(2));
}
