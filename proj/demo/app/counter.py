class Counter:
    def __init__(self, start):
        self.value = start

    def increment(self, step):
        if step < 0:
            raise ValueError("negative step")
        self.value += step

    def __repr__(self):
        return "Counter(%d)" % self.value
