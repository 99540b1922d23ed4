"""Branch predictor models: two-level GAs, a lite TAGE, perfect, static-taken.

The trace carries no PCs, so both table-based predictors index purely by
global history. µops flagged branch_predictable=False bypass the tables and
alternate hit/miss, pinning their accuracy at exactly 50%.
"""


class TwoLevelGAs:
    """12-bit global history register indexing 4096 2-bit counters."""

    HISTORY_BITS = 12

    def __init__(self):
        self.history = 0
        self.counters = [1] * (1 << self.HISTORY_BITS)
        self._forced = 0

    def _table_predict(self):
        return self.counters[self.history] >= 2

    def _table_update(self, taken):
        idx = self.history
        if taken:
            self.counters[idx] = min(3, self.counters[idx] + 1)
        else:
            self.counters[idx] = max(0, self.counters[idx] - 1)
        mask = (1 << self.HISTORY_BITS) - 1
        self.history = ((self.history << 1) | int(taken)) & mask

    def predict_and_update(self, op) -> bool:
        """Returns True when the prediction matched op.branch_taken."""
        taken = op.branch_taken
        if op.branch_predictable is False:
            self._forced += 1
            correct = self._forced % 2 == 0
        else:
            correct = self._table_predict() == taken
        self._table_update(taken)
        return correct


class TageLite(TwoLevelGAs):
    """GAs base plus one 1024-entry tagged table keyed by 16-bit history."""

    LONG_BITS = 16
    TABLE_SIZE = 1024
    TAG_BITS = 6

    def __init__(self):
        super().__init__()
        self.long_history = 0
        self.tags = [-1] * self.TABLE_SIZE
        self.ctrs = [0] * self.TABLE_SIZE
        self.useful = [0] * self.TABLE_SIZE

    def _slot(self):
        idx = self.long_history % self.TABLE_SIZE
        tag = (self.long_history >> 10) & ((1 << self.TAG_BITS) - 1)
        return idx, tag

    def predict_and_update(self, op) -> bool:
        taken = op.branch_taken
        idx, tag = self._slot()
        provider = self.tags[idx] == tag
        base_pred = self._table_predict()
        pred = (self.ctrs[idx] >= 2) if provider else base_pred

        if op.branch_predictable is False:
            self._forced += 1
            correct = self._forced % 2 == 0
        else:
            correct = pred == taken

        if provider:
            self.ctrs[idx] = min(3, self.ctrs[idx] + 1) if taken \
                else max(0, self.ctrs[idx] - 1)
            if pred != base_pred:
                if pred == taken:
                    self.useful[idx] = min(3, self.useful[idx] + 1)
                else:
                    self.useful[idx] = max(0, self.useful[idx] - 1)
        elif base_pred != taken:
            # base mispredicted: allocate if the slot is not protected
            if self.useful[idx] == 0:
                self.tags[idx] = tag
                self.ctrs[idx] = 2 if taken else 1
            else:
                self.useful[idx] -= 1

        self._table_update(taken)
        self.long_history = ((self.long_history << 1) | int(taken)) \
            & ((1 << self.LONG_BITS) - 1)
        return correct


class Perfect:
    def predict_and_update(self, op) -> bool:
        return True


class StaticTaken:
    def predict_and_update(self, op) -> bool:
        return bool(op.branch_taken)


def make_predictor(name: str):
    try:
        return {"two_level_gas": TwoLevelGAs, "tage_lite": TageLite,
                "perfect": Perfect, "static_taken": StaticTaken}[name]()
    except KeyError:
        raise ValueError(f"unknown predictor {name!r}") from None
