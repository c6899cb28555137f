from testML_BaseTestClass import TestML_BaseTestClass

from costate_fusion.alarms import WindowedAlarm, run_windowed_alarm


class TestWindowedAlarm(TestML_BaseTestClass):

    def test_fires_after_consecutive_windows(self):
        alarm = WindowedAlarm(threshold=1.0, window=2, consecutive=2)
        fired = [alarm.update(float(i), v) for i, v in enumerate([2, 2, 0, 0, 2, 2, 2, 2])]
        self.assertEqual(fired, [False] * 7 + [True])
        self.assertEqual(alarm.alarm_t, 7.0)
        self.assertEqual(alarm.windows_seen, 4)
        self.assertEqual(alarm.windows_exceeded, 3)

    def test_alarm_latches(self):
        alarm = WindowedAlarm(threshold=1.0, window=1, consecutive=1)
        self.assertTrue(alarm.update(0.0, 5.0))
        self.assertFalse(alarm.update(1.0, 5.0))
        self.assertFalse(alarm.update(2.0, 0.0))
        self.assertTrue(alarm.alarmed)
        self.assertEqual(alarm.alarm_t, 0.0)

    def test_threshold_is_strict(self):
        alarm = WindowedAlarm(threshold=1.0, window=4, consecutive=1)
        for i in range(12):
            alarm.update(float(i), 1.0)
        self.assertFalse(alarm.alarmed)
        self.assertEqual(alarm.windows_exceeded, 0)
        self.assertEqual(alarm.last_mean, 1.0)
        self.assertFalse(alarm.exceeding)

    def test_exceeding_follows_last_window(self):
        alarm = WindowedAlarm(threshold=1.0, window=2, consecutive=5)
        self.assertFalse(alarm.exceeding)
        alarm.update(0.0, 3.0)
        self.assertFalse(alarm.exceeding)
        alarm.update(1.0, 3.0)
        self.assertTrue(alarm.exceeding)
        alarm.update(2.0, 0.0)
        self.assertTrue(alarm.exceeding)
        alarm.update(3.0, 0.0)
        self.assertFalse(alarm.exceeding)

    def test_copy_is_independent(self):
        alarm = WindowedAlarm(threshold=1.0, window=2, consecutive=1)
        alarm.update(0.0, 3.0)
        other = alarm.copy()
        other.update(1.0, 3.0)
        self.assertTrue(other.alarmed)
        self.assertFalse(alarm.alarmed)
        self.assertEqual(alarm.windows_seen, 0)

    def test_run_windowed_alarm(self):
        values = [0.0] * 40 + [5.0] * 60
        alarmed, alarm_t, seen, exceeded = run_windowed_alarm(values, threshold=1.0)
        self.assertTrue(alarmed)
        self.assertEqual(alarm_t, 99.0)
        self.assertEqual((seen, exceeded), (5, 3))
        alarmed, alarm_t, _, _ = run_windowed_alarm(values, threshold=1.0, times=[0.1 * i for i in range(100)])
        self.assertAlmostEqual(alarm_t, 9.9)
        self.assertEqual(run_windowed_alarm([0.5] * 100, threshold=1.0)[:2], (False, None))
