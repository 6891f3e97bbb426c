"""Independent reference implementations used as test oracles."""


class ListTlb:
    """Naive fully associative reference: one python list, front = oldest.

    LRU moves an entry to the back on every touch; FIFO leaves hits in
    place. Kept deliberately independent of the production structure.
    """

    def __init__(self, capacity, policy="lru"):
        self.capacity = capacity
        self.policy = policy
        self.entries = []

    def access(self, key):
        if key in self.entries:
            if self.policy == "lru":
                self.entries.remove(key)
                self.entries.append(key)
            return "hit"
        if len(self.entries) == self.capacity:
            self.entries.pop(0)
        self.entries.append(key)
        return "miss"
