import numpy as np
import pytest

from putput import (
    FormatError,
    LogicCircuit,
    ProbCircuit,
    dumps_lc,
    dumps_pc,
    pc_to_logic,
    read_any_circuit,
    read_lc,
    read_matrix,
    read_pc,
    write_lc,
    write_matrix,
    write_pc,
)
from synthdata import random_structured_pc, showcase_circuit


class TestRoundTrip:
    def test_pc_bit_exact(self, tmp_path):
        for seed in range(15):
            pc = random_structured_pc(np.random.default_rng(seed), 6)
            p = tmp_path / f"c{seed}.pc"
            write_pc(pc, p)
            back = read_pc(p)
            assert back == pc
            # weights survive with full precision, so the dump is a fixpoint
            assert dumps_pc(back) == dumps_pc(pc)

    def test_awkward_weight_values(self, tmp_path):
        from putput import InputNode, SumNode

        w = (0.1 + 0.2, 1e-300, 123456.789012345678)
        pc = ProbCircuit(
            (
                InputNode(0, True),
                InputNode(0, False),
                InputNode(1, True),
                SumNode((0, 1, 2), w),
            ),
            3,
        )
        p = tmp_path / "w.pc"
        write_pc(pc, p)
        assert read_pc(p).nodes[3].weights == w

    def test_lc_round_trip(self, tmp_path):
        lc = pc_to_logic(showcase_circuit())
        p = tmp_path / "s.lc"
        write_lc(lc, p)
        assert read_lc(p) == lc

    def test_empty_circuits(self, tmp_path):
        p = tmp_path / "e.pc"
        write_pc(ProbCircuit.empty(), p)
        assert p.read_text().strip().splitlines()[-1] == "root -1"
        assert read_pc(p).is_empty
        q = tmp_path / "e.lc"
        write_lc(LogicCircuit.empty(), q)
        assert read_lc(q).is_empty

    def test_comments_and_blank_lines_tolerated(self, tmp_path):
        text = "\n".join(
            [
                "# generated by hand",
                "putput-pc v1",
                "",
                "0 L 0 1   # the literal",
                "1 S 0:0.5",
                "root 1",
                "",
            ]
        )
        p = tmp_path / "c.pc"
        p.write_text(text)
        pc = read_pc(p)
        assert pc.size == 2
        assert pc.prob([True]) == 0.5

    def test_dispatch_on_header(self, tmp_path):
        pc = showcase_circuit()
        p = tmp_path / "x.pc"
        write_pc(pc, p)
        assert isinstance(read_any_circuit(p), ProbCircuit)
        q = tmp_path / "x.lc"
        write_lc(pc_to_logic(pc), q)
        assert isinstance(read_any_circuit(q), LogicCircuit)


def _parse_err(tmp_path, body, name="bad.pc", reader=read_pc):
    p = tmp_path / name
    p.write_text(body)
    with pytest.raises(FormatError) as ei:
        reader(p)
    return ei.value


class TestParseErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError) as ei:
            read_pc(tmp_path / "nope.pc")
        assert ei.value.line_no == 0
        assert "not found" in str(ei.value)

    def test_wrong_header(self, tmp_path):
        err = _parse_err(tmp_path, "putput-lc v1\nroot -1\n")
        assert err.line_no == 1
        assert "expected header" in err.reason

    def test_missing_root(self, tmp_path):
        err = _parse_err(tmp_path, "putput-pc v1\n0 L 0 1\n")
        assert "missing root" in err.reason

    def test_child_declared_after_use(self, tmp_path):
        body = "putput-pc v1\n0 S 1:0.5\n1 L 0 1\nroot 0\n"
        err = _parse_err(tmp_path, body)
        assert err.line_no == 2
        assert "not declared before use" in err.reason

    def test_out_of_order_ids(self, tmp_path):
        body = "putput-pc v1\n1 L 0 1\nroot 0\n"
        err = _parse_err(tmp_path, body)
        assert "out of order" in err.reason

    def test_bad_weight(self, tmp_path):
        body = "putput-pc v1\n0 L 0 1\n1 S 0:zero\nroot 1\n"
        err = _parse_err(tmp_path, body)
        assert err.line_no == 3
        assert "child:weight" in err.reason

    def test_logic_kind_in_pc(self, tmp_path):
        body = "putput-pc v1\n0 L 0 1\n1 A 0\nroot 1\n"
        err = _parse_err(tmp_path, body)
        assert "not allowed in a probabilistic circuit" in err.reason

    def test_product_kind_in_lc(self, tmp_path):
        body = "putput-lc v1\n0 L 0 1\n1 P 0\nroot 1\n"
        err = _parse_err(tmp_path, body, name="bad.lc", reader=read_lc)
        assert "not allowed in a logic circuit" in err.reason

    def test_duplicate_root(self, tmp_path):
        body = "putput-pc v1\n0 L 0 1\nroot 0\nroot 0\n"
        assert "duplicate root" in _parse_err(tmp_path, body).reason

    def test_root_out_of_range(self, tmp_path):
        body = "putput-pc v1\n0 L 0 1\nroot 4\n"
        assert "out of range" in _parse_err(tmp_path, body).reason

    def test_root_minus_one_with_nodes(self, tmp_path):
        body = "putput-pc v1\n0 L 0 1\nroot -1\n"
        assert "empty node list" in _parse_err(tmp_path, body).reason

    def test_unknown_kind(self, tmp_path):
        body = "putput-pc v1\n0 Q 0 1\nroot 0\n"
        assert "unknown node kind" in _parse_err(tmp_path, body).reason

    def test_unrecognized_header_dispatch(self, tmp_path):
        p = tmp_path / "junk.txt"
        p.write_text("hello world\n")
        with pytest.raises(FormatError) as ei:
            read_any_circuit(p)
        assert "unrecognized circuit header" in ei.value.reason

    def test_message_carries_path_and_line(self, tmp_path):
        p = tmp_path / "cited.pc"
        p.write_text("putput-pc v1\n0 L 0 2\nroot 0\n")
        with pytest.raises(FormatError) as ei:
            read_pc(p)
        assert str(ei.value).startswith(f"{p}:2:")


class TestMatrix:
    def test_round_trip(self, tmp_path):
        m = np.array([[True, False, True], [False, False, True]])
        p = tmp_path / "m.txt"
        write_matrix(m, p)
        assert (read_matrix(p) == m).all()

    def test_bad_entry(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("1 0 2\n")
        with pytest.raises(FormatError) as ei:
            read_matrix(p)
        assert "must be 0 or 1" in ei.value.reason

    def test_ragged_rows(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("1 0\n1\n")
        with pytest.raises(FormatError) as ei:
            read_matrix(p)
        assert ei.value.line_no == 2
