import unittest

from amcsp.parallel import shard_map, shard_seeds, split_range


class TestShardMap(unittest.TestCase):
    def test_results_follow_shard_order(self):
        shards = [(i, i + 1) for i in range(9, -1, -1)]
        expected = [sum(s) for s in shards]
        self.assertEqual(shard_map(sum, shards), expected)
        self.assertEqual(shard_map(sum, shards, workers=3), expected)

    def test_empty_and_single_shard(self):
        self.assertEqual(shard_map(sum, [], workers=4), [])
        self.assertEqual(shard_map(sum, [(1, 2)], workers=4), [3])

    def test_workers_must_be_positive(self):
        with self.assertRaisesRegex(ValueError, "workers must be positive"):
            shard_map(sum, [(1,)], workers=0)


class TestSeedsAndRanges(unittest.TestCase):
    def test_shard_seeds_are_deterministic_and_distinct(self):
        seeds = shard_seeds(1, 6)
        self.assertEqual(seeds, shard_seeds(1, 6))
        self.assertEqual(len(set(seeds)), 6)
        self.assertNotEqual(seeds, shard_seeds(2, 6))
        self.assertTrue(all(0 <= s < 1 << 64 for s in seeds))

    def test_split_range(self):
        self.assertEqual(split_range(10, 4), [(0, 4), (4, 8), (8, 10)])
        self.assertEqual(split_range(0, 4), [])
        self.assertEqual(split_range(3, 0), [(0, 1), (1, 2), (2, 3)])


if __name__ == "__main__":
    unittest.main()
