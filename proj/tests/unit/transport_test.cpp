#include <gtest/gtest.h>

#include <sys/socket.h>
#include <netinet/in.h>
#include <arpa/inet.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "../support/random_messages.hpp"
#include "apex/transport/services.hpp"
#include "apex/transport/tcp.hpp"
#include "test_helpers.hpp"

using namespace apex;
using namespace apex::transport;

namespace {

std::vector<Transition> batch(std::uint64_t first, std::size_t n) {
    auto ts = apex::testing::make_transitions(first, n);
    for (auto& t : ts) t = quantize_for_wire(t);
    return ts;
}

std::shared_ptr<ReplayService> replay_service(std::uint64_t seed = 1, std::uint64_t id = 77) {
    replay::ReplayConfig cfg;
    cfg.soft_capacity = 1000;
    cfg.seed = seed;
    return std::make_shared<ReplayService>(std::make_shared<replay::ReplayMemory>(cfg), id);
}

ChannelPtr inproc(const Handler& h) {
    auto ep = std::make_shared<InProcEndpoint>();
    ep->bind(h);
    return std::make_shared<InProcChannel>(ep);
}

// Rates depend on timing; everything else in a reply must match across transports.
WireMessage without_rates(WireMessage m) {
    if (auto* s = std::get_if<StatsResponse>(&m)) {
        s->stats.adds_per_sec = 0;
        s->stats.samples_per_sec = 0;
    }
    return m;
}

}  // namespace

TEST(WireFormat, StatsRequestBytes) {
    const std::vector<std::uint8_t> expected{0x01, 0x00, 0x00, 0x00, 0x07};
    EXPECT_EQ(encode(StatsRequest{}), expected);
    EXPECT_TRUE(std::holds_alternative<StatsRequest>(decode(expected)));
}

TEST(WireFormat, TagsMatchVariantOrder) {
    EXPECT_EQ(tag_of(AddBatch{}), Tag::kAddBatch);
    EXPECT_EQ(tag_of(ParamsResponse{}), Tag::kParamsResponse);
    EXPECT_EQ(tag_of(Error{}), Tag::kError);
}

TEST(WireFormat, RoundTripRandomMessages) {
    apex::testing::MessageGenerator gen(42);
    for (int i = 0; i < 10000; ++i) {
        const auto m = gen.message();
        const auto codec = i % 2 ? Codec::kDeflate : Codec::kRaw;
        const auto bytes = encode(m, codec);
        ASSERT_EQ(decode(bytes), m) << "case " << i << " tag " << tag_name(tag_of(m));
    }
}

TEST(WireFormat, RejectsMalformedFrames) {
    // Declares 5 bytes, carries 3.
    const std::vector<std::uint8_t> short_frame{0x05, 0x00, 0x00, 0x00, 0x07, 0x00, 0x00};
    EXPECT_THROW(decode(short_frame), ProtocolError);
    const std::vector<std::uint8_t> bad_tag{0x01, 0x00, 0x00, 0x00, 0x2a};
    EXPECT_THROW(decode(bad_tag), ProtocolError);
    const std::vector<std::uint8_t> empty{0x00, 0x00, 0x00, 0x00};
    EXPECT_THROW(decode(empty), ProtocolError);
    std::vector<std::uint8_t> huge{0xff, 0xff, 0xff, 0x7f, 0x07};
    EXPECT_THROW(decode(huge), ProtocolError);
    auto trailing = encode(StatsRequest{});
    trailing.push_back(0);
    trailing[0] = 2;
    EXPECT_THROW(decode(trailing), ProtocolError);
}

TEST(WireFormat, FuzzedFramesFailCleanly) {
    apex::testing::MessageGenerator gen(7);
    int parsed = 0, rejected = 0;
    for (int i = 0; i < 20000; ++i) {
        const auto f = gen.fuzz_frame();
        try {
            decode(f);
            ++parsed;
        } catch (const ProtocolError&) {
            ++rejected;
        }
    }
    EXPECT_EQ(parsed + rejected, 20000);
    EXPECT_GT(rejected, 0);
}

TEST(ReplayServiceTest, AddThenSample) {
    auto service = replay_service();
    ReplayClient client(inproc(make_handler(service)));
    const auto ack = client.add_batch(batch(0, 50), std::vector<double>(50, 1.0));
    EXPECT_EQ(ack.affected, 50u);
    EXPECT_EQ(ack.stats.size, 50u);
    EXPECT_EQ(ack.instance_id, 77u);

    const auto sample = client.sample(50, 0.4);
    EXPECT_EQ(sample.items.size(), 50u);
    EXPECT_EQ(sample.replay_size, 50u);
    for (const auto& item : sample.items) {
        EXPECT_EQ(item.key, item.transition.key);
        EXPECT_NEAR(item.probability, 1.0 / 50, 1e-12);
        EXPECT_TRUE(service->memory().contains(item.key));
    }
}

TEST(ReplayServiceTest, ErrorsAreTyped) {
    auto service = replay_service();
    ReplayClient client(inproc(make_handler(service)));
    try {
        client.sample(4, 0.4);
        FAIL();
    } catch (const RemoteError& e) {
        EXPECT_EQ(e.code(), ErrorCode::kEmptyMemory);
    }
    client.add_batch(batch(0, 3), {1, 1, 1});
    try {
        client.add_batch(batch(2, 1), {1});
        FAIL();
    } catch (const RemoteError& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDuplicateKey);
    }
    const auto wrong = inproc(make_handler(service))->call(ParamsRequest{});
    ASSERT_TRUE(std::holds_alternative<Error>(wrong));
    EXPECT_EQ(std::get<Error>(wrong).code, ErrorCode::kUnsupported);
}

TEST(ReplayServiceTest, SetPrioritiesWithTrim) {
    auto service = replay_service();
    ReplayClient client(inproc(make_handler(service)));
    client.add_batch(batch(0, 1100), std::vector<double>(1100, 1.0));
    const auto ack = client.set_priorities({5, 999999}, {3.0, 1.0}, true);
    EXPECT_EQ(ack.affected, 1u);
    EXPECT_EQ(ack.skipped, 1u);
    EXPECT_EQ(ack.removed, 100u);
    EXPECT_EQ(ack.stats.size, 1000u);
}

TEST(ParamServiceTest, NoParametersUntilPublished) {
    auto params = std::make_shared<ParamService>();
    ParamsClient client(inproc(make_handler(params)));
    EXPECT_FALSE(client.fetch().has_value());
    params->publish(nn::make_snapshot(3, {0.5, -1.25, 1.0 / 3.0}));
    const auto got = client.fetch();
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(got->version, 3u);
    EXPECT_EQ(got->weights[1], -1.25);
    EXPECT_EQ(got->weights[2], static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST(InProc, UnboundEndpointIsATransportError) {
    auto ep = std::make_shared<InProcEndpoint>();
    InProcChannel ch(ep);
    EXPECT_THROW(ch.call(StatsRequest{}), TransportError);
    ep->bind(make_handler(replay_service()));
    EXPECT_NO_THROW(ch.call(StatsRequest{}));
    ep->unbind();
    EXPECT_THROW(ch.call(StatsRequest{}), TransportError);
}

TEST(Tcp, EndpointParsing) {
    EXPECT_EQ(Endpoint::parse("localhost:5000"), (Endpoint{"localhost", 5000}));
    EXPECT_THROW(Endpoint::parse("nohost"), std::invalid_argument);
    EXPECT_THROW(Endpoint::parse("h:99999"), std::invalid_argument);
}

TEST(Tcp, MatchesInProcessTransport) {
    auto tcp_service = replay_service(5);
    auto local_service = replay_service(5);
    TcpServer server({"127.0.0.1", 0}, make_handler(tcp_service));
    server.start();
    auto tcp = std::make_shared<TcpChannel>(server.endpoint());
    auto local = inproc(make_handler(local_service));

    std::vector<WireMessage> script;
    std::uint64_t next = 0;
    for (int round = 0; round < 20; ++round) {
        script.push_back(AddBatch{batch(next, 40), std::vector<double>(40, 0.5 + round)});
        next += 40;
        script.push_back(SampleRequest{16, 0.4});
        script.push_back(SetPriorities{{next - 1, next - 2, 123456789}, {2.0, 0.1, 1.0}, round % 5 == 4});
        script.push_back(StatsRequest{});
    }
    script.push_back(AddBatch{batch(0, 1), {1.0}});  // duplicate: both must refuse
    for (const auto& m : script) {
        EXPECT_EQ(without_rates(tcp->call(m)), without_rates(local->call(m))) << tag_name(tag_of(m));
    }
    EXPECT_EQ(tcp_service->memory().insertion_order(), local_service->memory().insertion_order());
    server.stop();
}

TEST(Tcp, ConcurrentClientsAreLinearizable) {
    auto service = replay_service();
    TcpServer server({"127.0.0.1", 0}, make_handler(service));
    server.start();
    std::vector<std::thread> clients;
    for (int c = 0; c < 2; ++c) {
        clients.emplace_back([&, c] {
            ReplayClient client(std::make_shared<TcpChannel>(server.endpoint()));
            for (int b = 0; b < 10; ++b) {
                client.add_batch(batch(static_cast<std::uint64_t>(c * 100000 + b * 50), 50), std::vector<double>(50, 1.0));
            }
        });
    }
    for (auto& t : clients) t.join();
    EXPECT_EQ(service->memory().size(), 1000u);
    server.stop();
}

TEST(Tcp, SurvivesClientDisconnectMidFrame) {
    auto service = replay_service();
    TcpServer server({"127.0.0.1", 0}, make_handler(service));
    server.start();

    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(server.port());
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
    auto frame = encode(AddBatch{batch(0, 10), std::vector<double>(10, 1.0)});
    ASSERT_GT(::send(fd, frame.data(), frame.size() / 2, 0), 0);
    ::close(fd);

    ReplayClient client(std::make_shared<TcpChannel>(server.endpoint()));
    EXPECT_EQ(client.stats().stats.size, 0u);
    EXPECT_EQ(client.add_batch(batch(0, 10), std::vector<double>(10, 1.0)).stats.size, 10u);
    server.stop();
}

TEST(Tcp, BadFrameGetsErrorReply) {
    auto service = replay_service();
    TcpServer server({"127.0.0.1", 0}, make_handler(service));
    server.start();
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(server.port());
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
    const std::vector<std::uint8_t> junk{0x03, 0x00, 0x00, 0x00, 0x02, 0x01, 0x02};
    ASSERT_EQ(::send(fd, junk.data(), junk.size(), 0), static_cast<ssize_t>(junk.size()));
    std::vector<std::uint8_t> reply(4096);
    const auto n = ::recv(fd, reply.data(), reply.size(), 0);
    ASSERT_GT(n, 5);
    reply.resize(static_cast<std::size_t>(n));
    const auto m = decode(reply);
    ASSERT_TRUE(std::holds_alternative<Error>(m));
    EXPECT_EQ(std::get<Error>(m).code, ErrorCode::kBadFrame);
    ::close(fd);
    server.stop();
}

TEST(Tcp, ReconnectsAfterServerRestart) {
    auto service = replay_service();
    auto server = std::make_unique<TcpServer>(Endpoint{"127.0.0.1", 0}, make_handler(service));
    server->start();
    const auto ep = server->endpoint();
    ReplayClient client(std::make_shared<TcpChannel>(ep, Codec::kDeflate, std::chrono::milliseconds(2000)));
    EXPECT_EQ(client.stats().instance_id, 77u);
    server.reset();
    EXPECT_THROW(client.stats(), TransportError);

    auto fresh = replay_service(1, 78);
    server = std::make_unique<TcpServer>(ep, make_handler(fresh));
    server->start();
    EXPECT_EQ(client.stats().instance_id, 78u);
}

TEST(Delayed, AddsLatencyBothWays) {
    auto ch = std::make_shared<DelayedChannel>(inproc(make_handler(replay_service())), std::chrono::milliseconds(30));
    const auto t0 = std::chrono::steady_clock::now();
    ReplayClient(ch).stats();
    EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(60));
}
