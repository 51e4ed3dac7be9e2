# PASS/FAIL lines written by the acceptance tests, echoed in the terminal summary
acceptance_log: list[str] = []
