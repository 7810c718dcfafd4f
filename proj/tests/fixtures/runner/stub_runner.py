# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The dsrepair Authors
#
# Scripted stand-in for the sandbox runner, driven by markers in `code`.

import json
import sys
import time


def answer(req):
    code = req.get("code", "")
    resp = {"id": req.get("id", ""), "status": "ok", "passed": True, "kind": "none",
            "failed_source": "", "captured_value_repr": "", "stderr": ""}
    if "#hang" in code:
        time.sleep(600)
    if "#crash" in code:
        sys.exit(3)
    if "#garbage" in code:
        return "this is not json"
    if "#wrongid" in code:
        resp["id"] = resp["id"] + "-other"
    if "#stderr" in code:
        sys.stderr.write("diagnostic from the runner\n")
        sys.stderr.flush()
    if "#timeout" in code:
        resp.update(status="timeout", passed=False, first_failed_index=0, last_executed_index=-1)
    lines = [l for l in code.splitlines() if l.strip()]
    for i, line in enumerate(lines):
        if "raise" in line:
            resp.update(passed=False, kind="runtime", last_executed_index=i - 1,
                        first_failed_index=i, failed_source=line.strip(),
                        stderr="Traceback (most recent call last):\nValueError: boom\n")
            break
    return json.dumps(resp)


def main():
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
        except ValueError as exc:
            print(json.dumps({"id": "", "status": "error", "message": str(exc)}), flush=True)
            continue
        print(answer(req), flush=True)


if __name__ == "__main__":
    main()
