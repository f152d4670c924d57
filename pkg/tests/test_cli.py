import os
import threading

import pytest

from pake_authkit.cli import main
from pake_authkit.relay import RelayConfig, serve


@pytest.fixture
def relay(tmp_path):
    server = serve(RelayConfig(bind="127.0.0.1:0",
                               storage_dir=str(tmp_path / "relay")))
    server.start_background()
    yield server
    server.shutdown()


def secret_fd(secret: str) -> int:
    r, w = os.pipe()
    os.write(w, (secret + "\n").encode())
    os.close(w)
    return r


def auth_args(tmp_path, who: str, relay, extra=()):
    return [
        "--identity", who,
        "--key-file", str(tmp_path / f"{who}.key"),
        "--trust-store", str(tmp_path / f"{who}.journal"),
        "--relay", relay.locator,
        "--timeout", "30", "--poll", "0.05",
        *extra,
    ]


def run_in_thread(argv, results, key):
    def target():
        results[key] = main(argv)
    t = threading.Thread(target=target)
    t.start()
    return t


class TestEstimateCommand:
    def test_case_study_two_middle_words(self, capsys):
        assert main(["estimate", "--bits", "80", "--boundary", "16",
                     "--checked-middle", "32"]) == 0
        out = capsys.readouterr().out
        assert "log2(e) = 37.5" in out
        assert "(~2^38)" in out
        assert "q = 1 - 2^-38" in out

    def test_case_study_one_middle_word(self, capsys):
        assert main(["estimate", "--bits", "80", "--boundary", "16",
                     "--checked-middle", "16"]) == 0
        out = capsys.readouterr().out
        assert "(~2^31)" in out or "(~2^32)" in out

    def test_infeasible(self, capsys):
        assert main(["estimate", "--bits", "80", "--boundary", "16",
                     "--checked-middle", "48"]) == 0
        assert "infeasible" in capsys.readouterr().out

    def test_inconsistent_partition_exits_3(self):
        assert main(["estimate", "--bits", "80", "--boundary", "50",
                     "--checked-middle", "4"]) == 3


class TestTrustwordsCommand:
    FPR_A = "aa" * 20
    FPR_B = "bb" * 20

    def test_equal_fingerprints(self, capsys):
        assert main(["trustwords", self.FPR_A, self.FPR_A, "--count", "5"]) == 0
        out = capsys.readouterr().out.strip()
        assert out == "0000 0000 0000 0000 0000"

    def test_count5_prefix_and_warning(self, capsys):
        main(["trustwords", self.FPR_A, self.FPR_B, "--count", "10"])
        ten = capsys.readouterr().out.split()
        main(["trustwords", self.FPR_A, self.FPR_B, "--count", "5"])
        captured = capsys.readouterr()
        assert captured.out.split() == ten[:5]
        assert "80 of 160 bits" in captured.err

    def test_swapped_arguments_identical(self, capsys):
        main(["trustwords", self.FPR_A, self.FPR_B])
        first = capsys.readouterr().out
        main(["trustwords", self.FPR_B, self.FPR_A])
        assert capsys.readouterr().out == first

    def test_malformed_hex_exits_3(self):
        assert main(["trustwords", "zz" * 20, self.FPR_B]) == 3
        assert main(["trustwords", "abcd", self.FPR_B]) == 3

    def test_custom_dictionary(self, tmp_path, capsys):
        from pake_authkit.trustwords import Dictionary
        words = [f"w{i:05d}" for i in range(65536)]
        path = tmp_path / "dict.txt"
        Dictionary(words).save(path)
        assert main(["trustwords", self.FPR_A, self.FPR_A, "--dict", str(path)]) == 0
        assert capsys.readouterr().out.split() == ["w00000"] * 10


class TestSecretHygiene:
    def test_secret_via_argv_refused(self, tmp_path, relay):
        code = main(["auth", "init", "--peer", "bob", "--secret", "hunter2",
                     *auth_args(tmp_path, "alice", relay)])
        assert code == 3

    def test_secret_never_in_output(self, tmp_path, relay, capsys):
        fd = secret_fd("VERYSECRETPHRASE")
        main(["auth", "init", "--peer", "bob", "--secret-fd", str(fd),
              *auth_args(tmp_path, "alice", relay, ("--timeout", "0.3"))])
        captured = capsys.readouterr()
        assert "VERYSECRETPHRASE" not in captured.out + captured.err


class TestSimulateCommand:
    def test_bundled_mitm_scenario(self, capsys):
        assert main(["simulate", "mitm.scn"]) == 0
        out = capsys.readouterr().out
        assert out.count("ABORTED") >= 2
        assert "adversary password tests this run = 2" in out

    def test_bundled_guess_abort_scenario(self, capsys):
        assert main(["simulate", "guess_abort.scn"]) == 0
        out = capsys.readouterr().out
        a_line = [l for l in out.splitlines() if l.startswith("A:")][0]
        assert "TIMEOUT" in a_line
        assert "FAILED" not in a_line.upper().replace("TIMEOUT", "")
        assert "adversary password tests this run = 1" in out

    def test_bundled_drop_scenario(self, capsys):
        assert main(["simulate", "drop_all.scn"]) == 0
        assert "TIMEOUT" in capsys.readouterr().out

    def test_missing_scenario_exits_3(self):
        assert main(["simulate", "no-such-scenario.scn"]) == 3


class TestAuthEndToEnd:
    def test_relay_carrier_same_secret_both_exit_0(self, tmp_path, relay, capsys):
        fd_a = secret_fd("our favourite place")
        fd_b = secret_fd("our favourite place")
        results = {}
        t_resp = run_in_thread(
            ["auth", "respond", "--secret-fd", str(fd_b),
             *auth_args(tmp_path, "bob", relay)], results, "bob")
        t_init = run_in_thread(
            ["auth", "init", "--peer", "bob", "--secret-fd", str(fd_a),
             *auth_args(tmp_path, "alice", relay)], results, "alice")
        t_init.join(timeout=40)
        t_resp.join(timeout=40)
        assert results == {"alice": 0, "bob": 0}
        out = capsys.readouterr().out
        assert out.count("AUTHENTICATED") == 2
        assert "peer fingerprint:" in out

    def test_relay_carrier_different_secrets_exit_1(self, tmp_path, relay, capsys):
        fd_a = secret_fd("one phrase")
        fd_b = secret_fd("another phrase")
        results = {}
        t_resp = run_in_thread(
            ["auth", "respond", "--secret-fd", str(fd_b),
             *auth_args(tmp_path, "bob", relay)], results, "bob")
        t_init = run_in_thread(
            ["auth", "init", "--peer", "bob", "--secret-fd", str(fd_a),
             *auth_args(tmp_path, "alice", relay)], results, "alice")
        t_init.join(timeout=40)
        t_resp.join(timeout=40)
        assert results == {"alice": 1, "bob": 1}
        out = capsys.readouterr().out
        # the verdict distinguishes a verified mismatch from a timeout
        assert "verified mismatch" in out
        assert "TIMEOUT" not in out

    def test_file_carrier_roundtrip(self, tmp_path, capsys):
        shared = str(tmp_path / "shared-mailbox")
        fd_a = secret_fd("le bistro")
        fd_b = secret_fd("le bistro")
        common = ["--carrier", "file", "--mailbox", shared,
                  "--timeout", "30", "--poll", "0.05"]
        results = {}
        t_resp = run_in_thread(
            ["auth", "respond", "--secret-fd", str(fd_b),
             "--identity", "bob", "--key-file", str(tmp_path / "b.key"),
             "--trust-store", str(tmp_path / "b.journal"), *common],
            results, "bob")
        t_init = run_in_thread(
            ["auth", "init", "--peer", "bob", "--secret-fd", str(fd_a),
             "--identity", "alice", "--key-file", str(tmp_path / "a.key"),
             "--trust-store", str(tmp_path / "a.journal"), *common],
            results, "alice")
        t_init.join(timeout=40)
        t_resp.join(timeout=40)
        assert results == {"alice": 0, "bob": 0}
        # the shared directory holds armored attachments
        blocks = os.listdir(shared)
        assert blocks
        text = open(os.path.join(shared, sorted(blocks)[0]), encoding="utf-8").read()
        assert "-----BEGIN PAKE-AUTH MESSAGE-----" in text


class TestStatusAndLockout:
    def test_status_and_reset(self, tmp_path, capsys):
        store_path = str(tmp_path / "trust.journal")
        from pake_authkit.session import PeerTrustStore
        store = PeerTrustStore(store_path)
        for _ in range(3):
            store.record_failure("bob")
        args = ["--trust-store", store_path, "--identity", "alice"]
        assert main(["auth", "status", "--peer", "bob", *args]) == 0
        assert "LOCKED" in capsys.readouterr().out
        assert main(["reset-lockout", "--peer", "bob", *args]) == 0
        capsys.readouterr()
        main(["auth", "status", "--peer", "bob", *args])
        assert "LOCKED" not in capsys.readouterr().out
