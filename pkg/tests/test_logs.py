"""Logger namespace and the JSON-lines log file."""
import json
import logging

from dagbft.logs import LOG_FILE_NAME, ROOT_LOGGER, get_logger, setup_logging


def test_loggers_live_under_the_package_namespace():
    assert get_logger("dagbft.core.dag").name == "dagbft.core.dag"
    assert get_logger("plugin").name == "dagbft.plugin"


def test_json_lines_file_keeps_extra_fields(tmp_path):
    setup_logging(tmp_path)
    try:
        get_logger("dagbft.test").info(
            "round %d reached", 4, extra={"authority": 2, "round": 4}
        )
        for handler in logging.getLogger(ROOT_LOGGER).handlers:
            handler.flush()
        [line] = (tmp_path / LOG_FILE_NAME).read_text(encoding="utf-8").splitlines()
        record = json.loads(line)
        assert record["message"] == "round 4 reached"
        assert record["level"] == "INFO"
        assert (record["authority"], record["round"]) == (2, 4)
    finally:
        setup_logging(None)


def test_setup_replaces_previous_handlers(tmp_path):
    setup_logging(tmp_path)
    setup_logging(None, verbose=True)
    root = logging.getLogger(ROOT_LOGGER)
    assert len(root.handlers) == 1
    assert root.level == logging.DEBUG
