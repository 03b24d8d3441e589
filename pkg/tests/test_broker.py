import threading
import time

import pytest

from pharmatrace.broker import Broker, BrokerClient
from pharmatrace.errors import BrokerUnavailable


@pytest.fixture
def broker():
    b = Broker().start()
    yield b
    b.stop()


def collect(client, topic):
    got = []
    event = threading.Event()

    def handler(data):
        got.append(data)
        event.set()

    client.subscribe(topic, handler)
    return got, event


def test_publish_reaches_subscriber(broker):
    sub = BrokerClient(*broker.address)
    pub = BrokerClient(*broker.address)
    got, event = collect(sub, "t/1")
    assert pub.publish("t/1", b"hello") is True
    assert event.wait(2)
    assert got == [b"hello"]
    sub.close(); pub.close()


def test_topic_routing_is_exact(broker):
    sub = BrokerClient(*broker.address)
    pub = BrokerClient(*broker.address)
    got, event = collect(sub, "t/1")
    assert pub.publish("t/other", b"x") is True  # acked but not delivered to t/1
    assert not event.wait(0.2)
    assert got == []
    sub.close(); pub.close()


def test_all_subscribers_receive(broker):
    subs = [BrokerClient(*broker.address) for _ in range(3)]
    collected = [collect(s, "fan") for s in subs]
    pub = BrokerClient(*broker.address)
    pub.publish("fan", b"msg")
    for got, event in collected:
        assert event.wait(2)
        assert got == [b"msg"]
    for s in subs:
        s.close()
    pub.close()


def test_messages_keep_order(broker):
    sub = BrokerClient(*broker.address)
    pub = BrokerClient(*broker.address)
    got = []
    done = threading.Event()
    sub.subscribe("seq", lambda d: (got.append(d), done.set() if len(got) == 20 else None))
    for i in range(20):
        assert pub.publish("seq", str(i).encode())
    assert done.wait(2)
    assert got == [str(i).encode() for i in range(20)]
    sub.close(); pub.close()


def test_connect_to_dead_broker_raises():
    b = Broker().start()
    host, port = b.address
    b.stop()
    time.sleep(0.05)
    with pytest.raises(BrokerUnavailable):
        BrokerClient(host, port)


def test_publish_after_broker_stop_raises(broker):
    pub = BrokerClient(*broker.address)
    broker.stop()
    time.sleep(0.05)
    with pytest.raises(BrokerUnavailable):
        for _ in range(5):
            pub.publish("t", b"x", timeout=0.2)
            time.sleep(0.05)
    pub.close()
