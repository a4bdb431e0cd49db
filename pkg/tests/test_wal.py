"""Write-ahead log framing and recovery scans."""
import pytest

from dagbft.core.block import Block, genesis_block
from dagbft.core.wal import RecordKind, WalRecord, WriteAheadLog, read_records
from dagbft.errors import EncodingError, WalCorruptionError

from conftest import owned_tx


def sample_log() -> WriteAheadLog:
    wal = WriteAheadLog.in_memory()
    parents = tuple(genesis_block(a).reference for a in (0, 1, 2))
    block = Block(author=0, round=1, parents=parents, timestamp=7).with_signature(b"s")
    tx = owned_tx(3)
    wal.append(WalRecord(RecordKind.SUBMIT, 1, tx=tx))
    wal.append(WalRecord(RecordKind.BLOCK, 5, block=block))
    wal.append(WalRecord(RecordKind.THRESHOLD, 6, round=1))
    wal.append(WalRecord(RecordKind.DROP, 8, tx_id=tx.id))
    wal.append(WalRecord(RecordKind.COMMIT, 9))
    return wal


def test_records_replay_in_order():
    wal = sample_log()
    records = list(wal.records())
    assert [r.kind for r in records] == [
        RecordKind.SUBMIT,
        RecordKind.BLOCK,
        RecordKind.THRESHOLD,
        RecordKind.DROP,
        RecordKind.COMMIT,
    ]
    assert records[1].block.signature == b"s"
    assert records[2].round == 1
    assert records[3].tx_id == records[0].tx.id
    assert wal.records_written == 5


@pytest.mark.parametrize("cut", [1, 5, 12])
def test_torn_tail_is_dropped(cut):
    data = sample_log().getvalue()
    records = read_records(data[:-cut])
    assert len(records) == 4


def test_bad_checksum_on_last_record_is_dropped():
    data = bytearray(sample_log().getvalue())
    data[-1] ^= 0xFF
    assert len(read_records(bytes(data))) == 4


def test_damage_before_the_tail_is_fatal():
    data = bytearray(sample_log().getvalue())
    data[10] ^= 0xFF
    with pytest.raises(WalCorruptionError) as info:
        read_records(bytes(data))
    assert info.value.offset == 0


def test_unknown_record_kind():
    with pytest.raises(EncodingError, match="kind"):
        WalRecord.decode(bytes([99]) + bytes(8))


def test_file_backed_log_survives_reopen(tmp_path):
    path = tmp_path / "wal" / "v0.log"
    wal = WriteAheadLog.open(path)
    wal.append(WalRecord(RecordKind.THRESHOLD, 3, round=2))
    wal.close()

    reopened = WriteAheadLog.open(path)
    reopened.append(WalRecord(RecordKind.COMMIT, 4))
    assert [r.kind for r in reopened.records()] == [RecordKind.THRESHOLD, RecordKind.COMMIT]
    reopened.close()
