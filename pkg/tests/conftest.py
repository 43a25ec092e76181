from shiftscatter._memtune import retain_heap

retain_heap()
